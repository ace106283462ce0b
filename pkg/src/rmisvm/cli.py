"""
Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import (
    DatasetFormatError,
    SynthConfig,
    generate_synthetic,
    l2_normalize,
    parse_ground_truth,
    read_dataset,
    serialize_dataset,
    serialize_ground_truth,
)
from .evaluation import detection_rate_curve, kfold_cv
from .gradcheck import run_gradcheck
from .misvm import MisvmConfig, train_misvm
from .model import (
    DimensionMismatch,
    HyperParams,
    bag_scores,
    format_model,
    load_model,
    noisy_or,
    predict_bag,
    predict_instance,
    select_top_instances,
)
from .objective import objective
from .solver import NumericalError, train

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

PRESETS = {
    "musk": dict(lam=0.05, beta=1.5, m0=0.5, normalize=False),
    "corel": dict(lam=0.02, beta=5.0, m0=2.0, normalize=True),
    "trec9": dict(lam=0.0003, beta=4.0, m0=2.0, normalize=True),
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _hp_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("hyperparameters")
    g.add_argument("--preset", choices=sorted(PRESETS), help="per-benchmark settings")
    g.add_argument("--lambda", dest="lam", type=float, help="regularization (default 0.01)")
    g.add_argument("--beta", type=float, help="bag-loss weight (default 5)")
    g.add_argument("--m0", type=float, help="instance margin (default 1)")
    g.add_argument("--p0", type=float, default=0.5, help="instance threshold")
    g.add_argument("--T", "--iterations", dest="T", type=int, default=2000)
    g.add_argument(
        "--schedule", choices=("t", "t+1"), default="t",
        help="step size 1/(lambda*t) or 1/(lambda*(t+1))",
    )
    g.add_argument("--normalize", action=argparse.BooleanOptionalAction, default=None,
                   help="L2-normalize instances before use")
    g.add_argument("--seed", type=int, default=0)


def _misvm_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("miSVM baseline")
    g.add_argument("--C", type=float, default=1.0)
    g.add_argument("--outer-iters", type=int, default=20)
    g.add_argument("--inner-iters", type=int, default=5000)


def _resolve_hp(args) -> tuple[HyperParams, bool]:
    base = dict(lam=0.01, beta=5.0, m0=1.0, normalize=False)
    if args.preset:
        base.update(PRESETS[args.preset])
    for key in ("lam", "beta", "m0", "normalize"):
        if getattr(args, key) is not None:
            base[key] = getattr(args, key)
    try:
        hp = HyperParams(
            lam=base["lam"], beta=base["beta"], m0=base["m0"], p0=args.p0,
            T=args.T, seed=args.seed, schedule=args.schedule,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return hp, bool(base["normalize"])


def _misvm_cfg(args) -> MisvmConfig:
    try:
        return MisvmConfig(C=args.C, max_outer_iters=args.outer_iters,
                           inner_iters=args.inner_iters, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(path, normalize=False):
    try:
        data = read_dataset(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except (DatasetFormatError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    return l2_normalize(data) if normalize else data


def _load_model(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def _check_model_dim(w, data):
    if data.dim > w.size:
        raise DataError(f"data dimension {data.dim} exceeds model dimension {w.size}")


def _write(path, text):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None


def _emit(text, out=None):
    if out:
        _write(out, text)
    else:
        sys.stdout.write(text)


def _finite(w):
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite model weights")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    hp, normalize = _resolve_hp(args)
    cfg = _misvm_cfg(args) if args.trainer == "misvm" else None
    data = _load(args.data, normalize)
    start = time.perf_counter()
    if args.trainer == "misvm":
        try:
            w = train_misvm(data, cfg).weights
        except ValueError as exc:
            raise DataError(str(exc)) from None
    else:
        w = train(data, hp).final_weights
    elapsed = time.perf_counter() - start
    _finite(w)
    _write(args.out, format_model(w))
    ob = objective(w, data, hp)
    print(f"trainer: {args.trainer}")
    print(f"bags: {data.n}  dim: {data.dim}")
    print(f"objective: {ob.total:.10g}")
    print(f"  regularization: {ob.reg_term:.10g}")
    print(f"  bag loss:       {ob.bag_term:.10g}")
    print(f"  instance loss:  {ob.ins_term:.10g}")
    print(f"model written to {args.out}", file=sys.stderr)
    print(f"wall-clock: {elapsed:.3f} s", file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    w = _load_model(args.model)
    data = _load(args.data, args.normalize)
    _check_model_dim(w, data)
    bag_rows, inst_rows = [], []
    for b in data.bags:
        s = bag_scores(w, b)
        P = noisy_or(s)[0]
        if not np.isfinite(P):
            raise NumericalError(f"non-finite probability for bag {b.id}")
        top = select_top_instances(w, b, 1)[0]
        bag_rows.append(f"{b.id} {P:.17g} {predict_bag(P)} {top} {s[top]:.17g}\n")
        if args.instances:
            inst_rows += [
                f"{b.id} {j} {pj:.17g} {predict_instance(pj, args.p0)}\n"
                for j, pj in enumerate(expit(s))
            ]
    _emit("".join(bag_rows + inst_rows), args.out)
    return 0


def cmd_cv(args) -> int:
    hp, normalize = _resolve_hp(args)
    cfg = _misvm_cfg(args)
    if args.folds < 2 or args.repeats < 1:
        raise UsageError("--folds must be >= 2 and --repeats >= 1")
    data = _load(args.data, normalize)
    start = time.perf_counter()
    try:
        report = kfold_cv(data, hp, k=args.folds, repeats=args.repeats,
                          trainer=args.trainer, seed=args.seed, misvm_cfg=cfg)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    sys.stdout.write(report.to_text())
    if args.report:
        _write(args.report, report.to_kv())
    print(f"wall-clock: {time.perf_counter() - start:.3f} s", file=sys.stderr)
    return 0


def cmd_gradcheck(args, grads=None) -> int:
    if args.trials < 1 or not args.eps > 0 or not args.tol > 0:
        raise UsageError("--trials, --eps and --tol must be positive")
    res = run_gradcheck(trials=args.trials, eps=args.eps, seed=args.seed, tol=args.tol, grads=grads)
    print(f"trials: {res.trials}  eps: {res.eps:g}  tolerance: {res.tol:g}")
    print(f"max relative error: {res.max_rel_error:.3e}")
    if res.passed:
        print("gradcheck: PASS")
        return 0
    print("gradcheck: FAIL")
    cfg = " ".join(f"{k}={v}" for k, v in res.worst.items())
    print(f"worst case: {cfg}", file=sys.stderr)
    return EXIT_NUMERIC


def cmd_synth(args) -> int:
    try:
        cfg = SynthConfig(
            n_pos_bags=args.n_pos, n_neg_bags=args.n_neg,
            instances_per_bag=args.instances_per_bag,
            positive_fraction=args.positive_fraction,
            dim=args.dim, margin=args.margin, noise=args.noise,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data, gt = generate_synthetic(cfg, args.seed)
    _write(args.out, serialize_dataset(data))
    _write(args.ground_truth, serialize_ground_truth(data, gt))
    print(f"wrote {data.n} bags ({cfg.n_pos_bags} positive) to {args.out}")
    print(f"wrote ground truth to {args.ground_truth}")
    return 0


def cmd_curve(args) -> int:
    try:
        ks = [int(k) for k in args.k.split(",") if k.strip()]
    except ValueError:
        raise UsageError(f"bad --k list {args.k!r}") from None
    if not ks or min(ks) < 1:
        raise UsageError("--k values must be positive integers")
    w = _load_model(args.model)
    data = _load(args.data, args.normalize)
    _check_model_dim(w, data)
    try:
        with open(args.ground_truth, encoding="utf-8") as f:
            gt = parse_ground_truth(f, data)
        curve = detection_rate_curve(w, data, gt, ks)
    except OSError as exc:
        raise DataError(f"cannot read {args.ground_truth}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise DataError(str(exc)) from None
    _emit(curve.to_kv() if args.out else curve.to_text(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rmisvm", description="Relaxed multiple-instance SVM toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write it to a file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trainer", choices=("rmi", "misvm"), default="rmi")
    _hp_args(p)
    _misvm_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score bags (and optionally instances)")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--instances", action="store_true", help="also emit instance rows")
    p.add_argument("--p0", type=float, default=0.5)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("cv", help="repeated stratified k-fold cross-validation")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--trainer", choices=("rmi", "misvm"), default="rmi")
    p.add_argument("--report", help="also write metric=value lines here")
    _hp_args(p)
    _misvm_args(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="generate a synthetic MIL dataset with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--ground-truth", required=True)
    d = SynthConfig()
    p.add_argument("--n-pos", type=int, default=d.n_pos_bags)
    p.add_argument("--n-neg", type=int, default=d.n_neg_bags)
    p.add_argument("--instances-per-bag", type=int, default=d.instances_per_bag)
    p.add_argument("--positive-fraction", type=float, default=d.positive_fraction)
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--margin", type=float, default=d.margin)
    p.add_argument("--noise", type=float, default=d.noise)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("curve", help="top-k detection rate against ground truth")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--k", default="1,2,3,5,10,20")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", help="write k<TAB>rate rows here")
    p.set_defaults(func=cmd_curve)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help and on usage errors; report the code instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rmisvm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionMismatch) as exc:
        print(f"rmisvm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"rmisvm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
