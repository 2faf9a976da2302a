import struct

import numpy as np
import pytest

from olinear import checkpoint
from olinear.errors import CheckpointError
from olinear.model import OLinearConfig, init_params
from olinear.train import load_checkpoint, save_checkpoint
from olinear.transform import OrthoBasis, build_basis


def make(tmp_path, rng, variant="olinear"):
    cfg = OLinearConfig(n_variates=3, lookback=6, horizon=4, embed_size=2, model_dim=5, variant=variant)
    q_in = OrthoBasis(np.linalg.qr(rng.standard_normal((6, 6)))[0], "eigen", np.linspace(3, 0.1, 6))
    q_out = build_basis(None, "fourier", 4)
    p = init_params(cfg, rng, q_in.q, q_out.q, np.full((3, 3), 1 / 3))
    for v in p.tensors.values():
        v[...] = rng.standard_normal(v.shape)
    path = tmp_path / "ck.olck"
    save_checkpoint(p, (q_in, q_out), cfg, path, {"note": "x"})
    return cfg, p, (q_in, q_out), path


@pytest.mark.parametrize("variant", ["olinear", "olinear_c"])
def test_round_trip_bit_exact(tmp_path, rng, variant):
    cfg, p, bases, path = make(tmp_path, rng, variant)
    ck = load_checkpoint(path)
    assert ck.config == cfg
    for group in ("tensors", "frozen"):
        a, b = getattr(p, group), getattr(ck.params, group)
        assert set(a) == set(b)
        for k in a:
            assert a[k].tobytes() == b[k].tobytes()
    assert ck.bases[0].method == "eigen" and ck.bases[1].method == "fourier"
    assert ck.bases[0].eigenvalues.tobytes() == bases[0].eigenvalues.tobytes()
    assert ck.echo["note"] == "x"


def test_save_is_deterministic(tmp_path, rng):
    _, p, bases, path = make(tmp_path, rng)
    cfg = load_checkpoint(path).config
    other = tmp_path / "b.olck"
    save_checkpoint(p, bases, cfg, other, {"note": "x"})
    assert other.read_bytes() == path.read_bytes()


def test_encode_special_values():
    t = {"a": np.array([[0.0, -0.0], [np.inf, 1e-310]]), "s": np.array(2.5)}
    out, cfg = checkpoint.decode(checkpoint.encode(t, {"k": "v = w"}))
    assert cfg == {"k": "v = w"}
    assert out["a"].tobytes() == t["a"].tobytes() and out["s"].shape == ()


def test_truncated(tmp_path, rng):
    _, _, _, path = make(tmp_path, rng)
    data = path.read_bytes()
    for cut in (3, 10, len(data) // 2, len(data) - 1):
        path.write_bytes(data[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_trailing_bytes(tmp_path, rng):
    _, _, _, path = make(tmp_path, rng)
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_bad_magic(tmp_path, rng):
    _, _, _, path = make(tmp_path, rng)
    path.write_bytes(b"NOPE" + path.read_bytes()[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_bad_version(tmp_path, rng):
    _, _, _, path = make(tmp_path, rng)
    data = path.read_bytes()
    path.write_bytes(data[:4] + struct.pack("<I", 99) + data[8:])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_shape_mismatch_names_tensor(tmp_path, rng):
    cfg, p, _, path = make(tmp_path, rng)
    tensors, echo = checkpoint.read(path)
    tensors["enc_w"] = np.zeros((5, 5))
    checkpoint.write(path, tensors, echo)
    with pytest.raises(CheckpointError, match="enc_w"):
        load_checkpoint(path)


def test_missing_and_unknown_tensor(tmp_path, rng):
    _, _, _, path = make(tmp_path, rng)
    tensors, echo = checkpoint.read(path)
    del tensors["dec_b"]
    checkpoint.write(path, tensors, echo)
    with pytest.raises(CheckpointError, match="dec_b"):
        load_checkpoint(path)
    tensors["dec_b"] = np.zeros(4)
    tensors["extra"] = np.zeros(1)
    checkpoint.write(path, tensors, echo)
    with pytest.raises(CheckpointError, match="extra"):
        load_checkpoint(path)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.olck")
