import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from olinear import _backend, _fallback

kernels = pytest.importorskip("olinear._kernels", reason="compiled extension not built")


@pytest.mark.parametrize("n", [1, 2, 5, 24, 48])
def test_compiled_and_fallback_bitwise_equal(n):
    rng = np.random.default_rng(n)
    a = rng.standard_normal((n, n))
    s = np.ascontiguousarray(a + a.T)
    d1, v1, sw1 = kernels.jacobi_eigh(s.copy(), 100)
    d2, v2, sw2 = _fallback.jacobi_eigh(s.copy(), 100)
    assert sw1 == sw2 >= 0
    assert d1.tobytes() == d2.tobytes()
    assert v1.tobytes() == v2.tobytes()


def test_correlation_matrix_parity():
    from olinear.data import from_array, lagged_temporal_corr
    from olinear.synthetic import ar1

    ds = from_array(ar1(2000, 2, 0.8, np.random.default_rng(0)))
    c = lagged_temporal_corr(ds, 16).matrix
    d1, v1, _ = kernels.jacobi_eigh(c.copy(), 100)
    d2, v2, _ = _fallback.jacobi_eigh(c.copy(), 100)
    assert v1.tobytes() == v2.tobytes()


def test_cap_reported_identically():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((9, 9))
    s = a + a.T
    assert kernels.jacobi_eigh(s.copy(), 1)[2] == _fallback.jacobi_eigh(s.copy(), 1)[2] == -1


def test_env_forces_fallback():
    env = dict(os.environ, OLINEAR_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import olinear; print(olinear.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_default_backend_is_compiled():
    if os.environ.get("OLINEAR_PURE_PYTHON") == "1":
        pytest.skip("fallback forced by environment")
    assert _backend.BACKEND == "cython"


def test_benchmark_script_runs():
    root = Path(__file__).resolve().parents[1]
    proc = subprocess.run([sys.executable, str(root / "benchmarks" / "bench_kernels.py"), "--sizes", "6", "--repeat", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.splitlines()[-1].endswith("True")
