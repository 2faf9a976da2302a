"""``olinear prepare|train|eval|ablate|inspect --config FILE [--set key=value ...]``"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from olinear import checkpoint
from olinear.config import RunConfig, load_run_config
from olinear.data import CsvSchema, TimeSeriesDataset, load_csv, make_windows, window_count
from olinear.errors import (
    CheckpointError,
    ConfigError,
    DataError,
    NumericalError,
    OLinearError,
    ShapeError,
)
from olinear.evaluation import (
    flops_estimate,
    metrics_csv,
    metrics_table,
    text_table,
    weight_rank_diagnostic,
)
from olinear.pipeline import Bases, prepare_bases
from olinear.train import (
    evaluate_windows,
    history_csv,
    load_checkpoint,
    save_checkpoint,
    train,
)
from olinear.transform import OrthoBasis, build_basis, decorrelation_score

log = logging.getLogger("olinear")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

BASES_FILE = "bases.olck"
CHECKPOINT_FILE = "checkpoint.olck"
# run-config keys that determine the precomputed bases
BASIS_KEYS = ("data", "train_ratio", "val_ratio", "q_source_fraction", "basis_method",
              "lookback", "horizon", "variant", "corr_transform")

ABLATION_AXES = {
    "basis": [("eigen", {"basis_method": "eigen"}),
              ("fourier", {"basis_method": "fourier"}),
              ("identity", {"basis_method": "identity"})],
    "normlin": [(f"{t}+{n}", {"normlin_transform": t, "normlin_norm": n})
                for t in ("softplus", "softmax", "sigmoid", "relu", "identity") for n in ("l1", "l2")],
    "csl": [(f"pre={a},post={b}", {"csl_pre_linear": a, "csl_post_linear": b})
            for a in (True, False) for b in (True, False)],
    "variant": [("olinear", {"variant": "olinear"}), ("olinear_c", {"variant": "olinear_c"})],
}


def _load_data(cfg: RunConfig) -> TimeSeriesDataset:
    schema = CsvSchema(cfg.train_ratio, cfg.val_ratio, cfg.lookback + cfg.horizon)
    ds = load_csv(cfg.data, schema)
    cfg.validate(ds.n_variates)
    return ds


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.output_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8")


def _bases_tensors(b: Bases) -> dict:
    t = {"q_in": b.q_in.q, "q_out": b.q_out.q}
    if b.q_in.eigenvalues is not None:
        t["q_in.eigenvalues"] = b.q_in.eigenvalues
    if b.q_out.eigenvalues is not None:
        t["q_out.eigenvalues"] = b.q_out.eigenvalues
    for name, est in (("corr_t_in", b.corr_in), ("corr_t_out", b.corr_out), ("corr_v", b.corr_v)):
        if est is not None:
            t[name] = est.matrix
    if b.corr_weight is not None:
        t["corr_weight"] = b.corr_weight
    return t


def _bases_echo(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    return {k: str(d[k]) for k in BASIS_KEYS}


def _read_bases(path: Path, cfg: RunConfig) -> Bases | None:
    if not path.is_file():
        return None
    tensors, echo = checkpoint.read(path)
    if echo != _bases_echo(cfg):
        log.info("%s was built for a different configuration; recomputing", path)
        return None
    q_in = OrthoBasis(tensors["q_in"], cfg.basis_method, tensors.get("q_in.eigenvalues"))
    q_out = OrthoBasis(tensors["q_out"], cfg.basis_method, tensors.get("q_out.eigenvalues"))
    return Bases(q_in, q_out, corr_weight=tensors.get("corr_weight"))


def _split_manifest(ds: TimeSeriesDataset, cfg: RunConfig) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("split", "start", "end", "steps", "windows"))
    for split in ("train", "val", "test"):
        lo, hi = ds.bounds(split)
        stride = cfg.stride if split == "train" else 1
        w.writerow((split, lo, hi, hi - lo, window_count(hi - lo, cfg.lookback, cfg.horizon, stride)))
    return buf.getvalue()


def cmd_prepare(cfg: RunConfig) -> Bases:
    """Estimate correlation matrices, build Q_in/Q_out, and write them with a split manifest."""
    ds = _load_data(cfg)
    bases = prepare_bases(ds, cfg.model_config(ds.n_variates), cfg.q_source_fraction)
    out = _out(cfg)
    checkpoint.write(out / BASES_FILE, _bases_tensors(bases), _bases_echo(cfg))
    _write(out / "split_manifest.csv", _split_manifest(ds, cfg))
    print(f"wrote {out / BASES_FILE} ({cfg.basis_method}, T={cfg.lookback}, tau={cfg.horizon})")
    return bases


def _fit(cfg: RunConfig, ds: TimeSeriesDataset, bases: Bases | None = None):
    model_cfg = cfg.model_config(ds.n_variates)
    if bases is None:
        bases = prepare_bases(ds, model_cfg, cfg.q_source_fraction)
    result = train(ds, model_cfg, cfg.train_config(), bases.q_in, bases.q_out,
                   bases.corr_weight, cfg.eval_batch_size)
    return model_cfg, bases, result


def cmd_train(cfg: RunConfig):
    ds = _load_data(cfg)
    out = _out(cfg)
    bases = _read_bases(out / BASES_FILE, cfg)
    model_cfg, bases, result = _fit(cfg, ds, bases)
    # the output location is not part of the model, so it stays out of the echo
    extra = {f"run.{k}": v for k, v in cfg.to_dict().items() if k != "output_dir"}
    extra["best_epoch"] = result.best_epoch
    save_checkpoint(result.params, (bases.q_in, bases.q_out), model_cfg, out / CHECKPOINT_FILE, extra)
    _write(out / "history.csv", history_csv(result.history))
    print(f"best epoch {result.best_epoch} of {len(result.history)}"
          + (" (early stop)" if result.stopped_early else ""))
    print(metrics_table([("val", result.val_report)]))
    return result


def _prediction_dump(windows, preds) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("window", "start", "variate", "step", "prediction", "target"))
    B, N, tau = preds.shape
    for b in range(B):
        for n in range(N):
            for t in range(tau):
                w.writerow((b, int(windows.starts[b]), n, t, repr(float(preds[b, n, t])),
                            repr(float(windows.targets[b, n, t]))))
    return buf.getvalue()


def cmd_eval(cfg: RunConfig, checkpoint_path=None, split: str = "test"):
    ds = _load_data(cfg)
    out = _out(cfg)
    ck = load_checkpoint(checkpoint_path or out / CHECKPOINT_FILE)
    if ck.config.n_variates != ds.n_variates:
        raise CheckpointError(f"checkpoint expects {ck.config.n_variates} variates, data has {ds.n_variates}")
    windows = make_windows(ds, split, ck.config.lookback, ck.config.horizon, 1)
    report, preds = evaluate_windows(ck.params, ck.config, windows, cfg.eval_batch_size)
    _write(out / f"metrics_{split}.csv", metrics_csv([(split, report)]))
    _write(out / f"predictions_{split}.csv", _prediction_dump(windows, preds))
    print(metrics_table([(split, report)]))
    return report, preds


def cmd_ablate(cfg: RunConfig, axis: str):
    if axis not in ABLATION_AXES:
        raise ConfigError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_AXES)}")
    ds = _load_data(cfg)
    out = _out(cfg)
    rows = []
    for label, changes in ABLATION_AXES[axis]:
        run = replace(cfg, **changes)
        model_cfg, _, result = _fit(run, ds)
        test_w = make_windows(ds, "test", model_cfg.lookback, model_cfg.horizon, 1)
        test_rep, _ = evaluate_windows(result.params, model_cfg, test_w, cfg.eval_batch_size)
        rows.append((label, result.val_report.mse, result.val_report.mae, test_rep.mse, test_rep.mae,
                     result.best_epoch))
        log.info("ablation %s=%s test_mse %.6f", axis, label, test_rep.mse)
    header = ("setting", "val_mse", "val_mae", "test_mse", "test_mae", "best_epoch")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow((r[0],) + tuple(repr(float(v)) for v in r[1:5]) + (r[5],))
    _write(out / f"ablation_{axis}.csv", buf.getvalue())
    print(text_table(header, rows))
    return rows


def cmd_inspect(cfg: RunConfig, checkpoint_path=None):
    ds = _load_data(cfg)
    out = _out(cfg)
    ck = load_checkpoint(checkpoint_path or out / CHECKPOINT_FILE)
    rows = []
    for br in weight_rank_diagnostic(ck.params, ck.config):
        rows.append(("normlin_rank", br.block, "numerical_rank", br.numerical_rank))
        rows.append(("normlin_rank", br.block, "effective_rank", br.effective_rank))
        rows.append(("normlin_rank", br.block, "n_variates", br.n_variates))
        rows.append(("normlin_rank", br.block, "degenerate_rows", br.degenerate_rows))
    test_w = make_windows(ds, "test", ck.config.lookback, ck.config.horizon, 1)
    if len(test_w) >= 2:
        q_in = ck.bases[0]
        rows.append(("decorrelation", "", f"q_in_{q_in.method}", decorrelation_score(test_w, q_in)))
        ident = build_basis(None, "identity", ck.config.lookback)
        rows.append(("decorrelation", "", "identity", decorrelation_score(test_w, ident)))
    fl = flops_estimate(ck.config.n_variates, ck.config.model_dim)
    rows.append(("flops", "", "normlin_module", fl.normlin_module))
    rows.append(("flops", "", "mhsa", fl.mhsa))
    header = ("section", "block", "key", "value")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        v = r[3]
        w.writerow(r[:3] + (repr(float(v)) if isinstance(v, (float, np.floating)) else v,))
    _write(out / "diagnostics.csv", buf.getvalue())
    print(text_table(header, rows))
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="olinear", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        return p

    common(sub.add_parser("prepare", help="compute correlation matrices and orthogonal bases"))
    common(sub.add_parser("train", help="train a model and write a checkpoint"))
    p = common(sub.add_parser("eval", help="evaluate a checkpoint on a split"))
    p.add_argument("--checkpoint", help=f"default: <output_dir>/{CHECKPOINT_FILE}")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p = common(sub.add_parser("ablate", help="sweep one design axis"))
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    p = common(sub.add_parser("inspect", help="rank, decorrelation and FLOPs diagnostics"))
    p.add_argument("--checkpoint", help=f"default: <output_dir>/{CHECKPOINT_FILE}")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args.config, args.set)
        cfg.validate()
        if args.command == "prepare":
            cmd_prepare(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, args.checkpoint, args.split)
        elif args.command == "ablate":
            cmd_ablate(cfg, args.axis)
        elif args.command == "inspect":
            cmd_inspect(cfg, args.checkpoint)
    except (ConfigError, ShapeError) as exc:
        print(f"olinear: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"olinear: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, OLinearError) as exc:
        print(f"olinear: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
