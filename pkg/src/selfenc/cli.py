"""Command-line entry point: ``selfenc <command> [flags]``.

Every command takes ``--seed`` (default from ``SELFENC_SEED``, else 0) and
``--config FILE``, a ``key: value`` file whose keys are flag names (dashes or
underscores) supplying defaults that explicit flags override.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import data as datamod
from .encoder import (
    AffineTransform,
    SelfEncoderConfig,
    fit,
    load_model,
    predict_proba,
    rank_neighbors,
    save_model,
    transfer_weights,
)
from .evaluation import (
    DEFAULT_FOLDS,
    DEFAULT_TRIALS,
    METHOD_NAMES,
    EuclideanKNN,
    accuracy,
    cross_validate,
    make_method,
    run_benchmark,
)
from .linalg import Rng, SingularMatrixError
from .neighbors import DEFAULT_K, nearest_sets, se_knn_predict_batch
from .optim import TrainSchedule
from .viz import GridSpec, agreement, region_map, render

log = logging.getLogger("selfenc")

# The categorical fixtures use the no-hidden-layer sigmoid encoder: n independent
# logistic regressions, a convex problem whose ranking does not depend on the seed.
FIXTURE_CONFIG = dict(output_normalization="sigmoid", schedule=TrainSchedule(initial_lr=0.05))
SQUARE_CONFIG = dict(output_normalization="softmax", schedule=TrainSchedule(initial_lr=0.05))
SHEAR = np.array([[1.5, 0.5], [0.5, 1.5]])


class CommandError(Exception):
    """Runtime failure reported as a one-line diagnostic with exit code 1."""


def default_seed() -> int:
    raw = os.environ.get("SELFENC_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise CommandError(f"SELFENC_SEED must be an integer, got {raw!r}") from None


def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":") if ":" in line else line.partition("=")
        if not sep:
            raise CommandError(f"{path}:{lineno}: expected 'key: value'")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.replace(" ", "").split(",") if v != ""])
    except ValueError:
        raise CommandError(f"cannot parse vector {text!r}") from None


def parse_transform(spec: str, dim: int) -> AffineTransform:
    """``identity``, ``scale-first-feature:F``, ``scale:J:F``, ``shear`` (2-D) or ``M=a,b;c,d [v=e,f]``."""
    spec = spec.strip()
    try:
        if spec == "identity":
            return AffineTransform.identity(dim)
        if spec.startswith("scale-first-feature:"):
            return datamod.scale_feature(dim, 0, float(spec.split(":", 1)[1]))
        if spec.startswith("scale:"):
            _, j, f = spec.split(":")
            return datamod.scale_feature(dim, int(j), float(f))
        if spec == "shear":
            if dim != 2:
                raise CommandError("the shear preset is 2-D only")
            return AffineTransform(SHEAR, np.zeros(2))
        if spec.startswith("M="):
            parts = dict(p.split("=", 1) for p in spec.split())
            m = np.array([parse_vector(row) for row in parts["M"].split(";")])
            v = parse_vector(parts["v"]) if "v" in parts else np.zeros(m.shape[0])
            if m.shape != (dim, dim):
                raise CommandError(f"transform matrix is {m.shape[0]}x{m.shape[1]}, data has dimension {dim}")
            return AffineTransform(m, v)
    except SingularMatrixError as exc:
        raise CommandError(f"transform is not invertible: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise CommandError(f"bad transform {spec!r}: {exc}") from None
    raise CommandError(f"unknown transform {spec!r}")


def load_dataset(args) -> datamod.Dataset:
    try:
        return datamod.resolve_dataset(args.data, getattr(args, "schema", None))
    except (datamod.DataError, OSError) as exc:
        raise CommandError(str(exc)) from None


def encoder_config(args) -> SelfEncoderConfig:
    hidden = tuple(int(h) for h in str(args.hidden).split(",") if h.strip()) if args.hidden else ()
    schedule = TrainSchedule(
        initial_lr=args.lr,
        lr_decay=args.lr_decay,
        max_epochs=args.epochs,
        patience=args.patience,
        min_improvement=args.min_improvement,
    )
    return SelfEncoderConfig(
        hidden_dims=hidden,
        hidden_activation=args.hidden_activation,
        output_normalization=args.norm,
        schedule=schedule,
        sample_size=args.sample_size,
        seed=args.seed,
        standardize_inputs=not args.no_standardize,
    )


def cmd_train(args) -> int:
    d = load_dataset(args)
    model = fit(d.features, encoder_config(args))
    save_model(model, args.out)
    print(f"trained on {d.n_samples} rows, {model.n_anchors} anchors, final loss {model.history[-1]:.6g} -> {args.out}")
    return 0


def cmd_rank(args) -> int:
    model = load_model(args.model)
    x = parse_vector(args.query)
    if x.shape[0] != model.input_dim:
        raise CommandError(f"query has {x.shape[0]} values, model expects {model.input_dim}")
    ranking = rank_neighbors(model, x)
    for anchor, p in ranking.top(args.top):
        row = ",".join(f"{v:g}" for v in model.anchor_features[list(model.anchor_indices).index(anchor)])
        print(f"{anchor}\t{p:.6f}\t{row}")
    return 0


def cmd_classify(args) -> int:
    model = load_model(args.model)
    train = load_dataset(args)
    try:
        queries = datamod.load_csv(args.queries, list(train.schema), class_names=train.class_names)
    except datamod.DataError as exc:
        raise CommandError(str(exc)) from None
    preds = se_knn_predict_batch(model, train.labels, queries.features, min(args.k, model.n_anchors))
    for p in preds:
        print(train.class_names[p])
    print(f"accuracy {accuracy(preds, queries.labels):.4f} on {queries.n_samples} rows", file=sys.stderr)
    return 0


def _method(args):
    base = SelfEncoderConfig(
        hidden_activation=args.hidden_activation,
        schedule=TrainSchedule(max_epochs=args.epochs, patience=args.patience),
    )
    return make_method(args.method, args.k, base=base, hidden=args.hidden_size, sample_size=args.sample_size)


def cmd_cv(args) -> int:
    d = load_dataset(args)
    report = cross_validate(d, _method(args), args.folds, args.trials, Rng(args.seed))
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"{d.name} {report.method}: {report.mean:.4f} +- {report.std:.4f} over {args.folds} folds ({report.seconds:.1f}s)")
    return 0


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHOD_NAMES:
            raise CommandError(f"unknown method {m!r}; choose from {', '.join(METHOD_NAMES)}")
    base = SelfEncoderConfig(schedule=TrainSchedule(max_epochs=args.epochs, patience=args.patience))
    report = run_benchmark(args.data, methods, args.out, args.seed, args.folds, args.trials, args.k, base)
    failed = 0
    for entry in report["datasets"]:
        if "error" in entry:
            failed += 1
            print(f"{entry['dataset']}: ERROR {entry['error']}")
            continue
        for res in entry["results"]:
            print(f"{entry['dataset']:>10} {res['method']:>20}: {res['mean']:.4f} +- {res['std']:.4f}")
    print(f"report written to {args.out}")
    return 1 if failed else 0


def invariance_demo(d: datamod.Dataset, t: AffineTransform, seed: int, folds=DEFAULT_FOLDS, trials=5, k=DEFAULT_K) -> dict:
    """Compare raw and transformed data three ways.

    (a) the exact weight transfer on a model fitted to the first training fold;
    (b) cross-validated SE-kNN accuracy after retraining on each version;
    (c) cross-validated Euclidean k-NN accuracy on each version.
    """
    dt = datamod.affine_transform(d, t)
    split = datamod.stratified_kfold(d.labels, folds, Rng(seed).derive(0))
    train_idx, test_idx = next(iter(split))
    model = fit(d.features[train_idx], SelfEncoderConfig(seed=seed))
    moved = transfer_weights(model, t)
    x_test = d.features[test_idx]
    deviation = float(np.max(np.abs(predict_proba(model, x_test) - predict_proba(moved, t.apply(x_test)))))
    se = make_method("se", k)
    knn = EuclideanKNN(k)
    return {
        "constructive_max_deviation": deviation,
        "se_raw": cross_validate(d, se, folds, trials, Rng(seed)).mean,
        "se_transformed": cross_validate(dt, se, folds, trials, Rng(seed)).mean,
        "knn_raw": cross_validate(d, knn, folds, 1, Rng(seed)).mean,
        "knn_transformed": cross_validate(dt, knn, folds, 1, Rng(seed)).mean,
    }


def cmd_invariance(args) -> int:
    d = load_dataset(args)
    t = parse_transform(args.transform, d.n_features)
    res = invariance_demo(d, t, args.seed, args.folds, args.trials, args.k)
    print(f"(a) constructive: max |f(x) - f~(Mx+v)| on test split = {res['constructive_max_deviation']:.3e}")
    print(f"(b) SE-kNN retrained: raw {res['se_raw']:.4f}  transformed {res['se_transformed']:.4f}")
    print(f"(c) Euclidean kNN:    raw {res['knn_raw']:.4f}  transformed {res['knn_transformed']:.4f}")
    return 0


def categorical_fixture(seed: int) -> dict:
    """Nearest neighbors of the query in the one-bit and two-bit encodings."""
    cfg = SelfEncoderConfig(seed=seed, **FIXTURE_CONFIG)
    m1 = fit(datamod.X1, cfg)
    m2 = fit(datamod.X2, cfg)
    return {
        "euclidean_x1": nearest_sets(datamod.X1, datamod.X1_QUERY).tolist(),
        "euclidean_x2": nearest_sets(datamod.X2, datamod.X2_QUERY).tolist(),
        "se_x1": int(rank_neighbors(m1, datamod.X1_QUERY).anchor_indices[0]),
        "se_x2": int(rank_neighbors(m2, datamod.X2_QUERY).anchor_indices[0]),
    }


def square_fixture(seed: int, size: int = 400) -> dict:
    model = fit(datamod.SQUARE, SelfEncoderConfig(seed=seed, **SQUARE_CONFIG))
    grid = GridSpec.around(datamod.SQUARE, width=size, height=size)
    eu = region_map(datamod.SQUARE, "euclidean", grid)
    se = region_map(datamod.SQUARE, model, grid)
    return {"model": model, "grid": grid, "euclidean": eu, "se": se, "agreement": agreement(se, eu, slack=1)}


def _rows(x, idx):
    return " ".join("(" + ",".join(f"{v:g}" for v in x[i]) + ")" for i in idx)


def cmd_fixtures(args) -> int:
    ok = True
    if args.case in ("categorical", "all"):
        r = categorical_fixture(args.seed)
        X1, X2 = datamod.X1, datamod.X2
        print(f"query x1 = {_rows([datamod.X1_QUERY], [0])} against X1 (one bit for the categorical feature)")
        print(f"  Euclidean nearest: {_rows(X1, r['euclidean_x1'])}")
        print(f"  self-encoder top:  {_rows(X1, [r['se_x1']])}")
        print(f"query x2 = {_rows([datamod.X2_QUERY], [0])} against X2 (two bits for the categorical feature)")
        print(f"  Euclidean nearest: {_rows(X2, r['euclidean_x2'])}")
        print(f"  self-encoder top:  {_rows(X2, [r['se_x2']])}")
        expected = r["euclidean_x1"] == [2] and r["euclidean_x2"] == [2, 3, 4] and r["se_x1"] == 2 and r["se_x2"] == 2
        print("  outcome:", "self-encoder agrees across encodings, Euclidean does not" if expected else "UNEXPECTED")
        ok &= expected
    if args.case in ("square", "all"):
        r = square_fixture(args.seed)
        print(f"square: self-encoder vs Euclidean region agreement {r['agreement']:.4f}")
        ok &= r["agreement"] >= 0.95
    return 0 if ok else 1


def cmd_voronoi(args) -> int:
    if args.case == "square":
        points = datamod.SQUARE
    else:
        if not args.points:
            raise CommandError("--points is required with --case custom")
        points = np.array([parse_vector(p) for p in args.points.split(";")])
        if points.ndim != 2 or points.shape[1] != 2:
            raise CommandError("--points must be 2-D points like '0,0;1,0;0,1'")
    t = parse_transform(args.transform, 2) if args.transform else None
    out = Path(args.out)
    fmt = out.suffix.lstrip(".").lower()
    if fmt not in ("ppm", "svg"):
        raise CommandError(f"output must end in .ppm or .svg, got {out.name}")
    metrics = ["euclidean", "se"] if args.metric == "both" else [args.metric]
    model = fit(points, SelfEncoderConfig(seed=args.seed, **SQUARE_CONFIG)) if "se" in metrics else None
    if t is not None:
        points = t.apply(points)
        model = transfer_weights(model, t) if model is not None else None
    grid = GridSpec.around(points, width=args.size, height=args.size)
    for metric in metrics:
        target = out if len(metrics) == 1 else out.with_name(f"{out.stem}-{metric}{out.suffix}")
        rmap = region_map(points, model if metric == "se" else "euclidean", grid)
        render(rmap, target)
        print(f"{metric}: {target}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $SELFENC_SEED or 0)")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="CSV path, CSV:SCHEMA, or a bundled name (iris, wine, glass, digits)")
    p.add_argument("--schema", default=None, help="schema sidecar (default: CSV path with .schema suffix)")


def _add_encoder(p: argparse.ArgumentParser) -> None:
    p.add_argument("--hidden", default="", help="comma-separated hidden layer sizes (default: none)")
    p.add_argument("--hidden-activation", default="relu", choices=["relu", "tanh", "sigmoid", "identity"])
    p.add_argument("--norm", default="softmax", choices=["softmax", "sigmoid"], help="output normalization")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--lr-decay", type=float, default=0.995)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--min-improvement", type=float, default=1e-5)
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--no-standardize", action="store_true", help="train on raw inputs without conditioning")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfenc", description="Self-encoder nearest neighbors.")
    parser.add_argument("--config", default=None, help="key: value file of flag defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a self-encoder and save it")
    _add_data(p)
    _add_encoder(p)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rank", help="rank a model's anchors for a query")
    p.add_argument("--model", required=True)
    p.add_argument("--query", required=True, help="comma-separated feature values (encoded)")
    p.add_argument("--top", type=int, default=5)
    _add_common(p)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("classify", help="SE-kNN labels for a query CSV")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--queries", required=True, help="CSV with the training file's columns")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("cv", help="cross-validated accuracy of one method")
    _add_data(p)
    p.add_argument("--method", default="se", choices=METHOD_NAMES)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--hidden-size", type=int, default=20)
    p.add_argument("--hidden-activation", default="relu", choices=["relu", "tanh", "sigmoid", "identity"])
    p.add_argument("--sample-size", type=int, default=100)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--out", default=None, help="write the report as JSON")
    _add_common(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bench", help="benchmark several methods on several datasets")
    p.add_argument("--data", nargs="+", required=True, help="dataset specs (see cv --data)")
    p.add_argument("--methods", default="knn,knn-normalized,se", help=f"comma-separated from {', '.join(METHOD_NAMES)}")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("invariance", help="affine invariance: exact transfer vs retraining vs Euclidean")
    _add_data(p)
    p.add_argument("--transform", default="scale-first-feature:1000")
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
    p.add_argument("--trials", type=int, default=5)
    _add_common(p)
    p.set_defaults(func=cmd_invariance)

    p = sub.add_parser("voronoi", help="nearest-anchor region maps as PPM or SVG")
    p.add_argument("--case", default="square", choices=["square", "custom"])
    p.add_argument("--points", default=None, help="custom points 'x,y;x,y;...'")
    p.add_argument("--metric", default="both", choices=["euclidean", "se", "both"])
    p.add_argument("--transform", default=None, help="apply to the points first (e.g. shear, M=1,1;0,1)")
    p.add_argument("--size", type=int, default=400)
    p.add_argument("--out", required=True, help="output .ppm or .svg")
    _add_common(p)
    p.set_defaults(func=cmd_voronoi)

    p = sub.add_parser("fixtures", help="run the bundled categorical and square examples")
    p.add_argument("--case", default="all", choices=["categorical", "square", "all"])
    _add_common(p)
    p.set_defaults(func=cmd_fixtures)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in sub_action.choices.values():
        actions = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, raw in values.items():
            if key in actions and key != "help":
                a = actions[key]
                if isinstance(a, argparse._StoreTrueAction):
                    defaults[key] = raw.lower() in ("1", "true", "yes", "on")
                else:
                    defaults[key] = a.type(raw) if a.type else raw
                a.required = False
        sp.set_defaults(**defaults)
    known_keys = {a.dest for sp in sub_action.choices.values() for a in sp._actions}
    unknown = sorted(set(values) - known_keys)
    if unknown:
        parser.error(f"unknown keys in {known.config}: {', '.join(unknown)}")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (OSError, CommandError) as exc:
        print(f"selfenc: error: {exc}", file=sys.stderr)
        return 1
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    with warnings.catch_warnings():
        if not args.verbose:
            warnings.simplefilter("ignore")
        try:
            if args.seed is None:
                args.seed = default_seed()
            return args.func(args)
        except (CommandError, datamod.DataError, SingularMatrixError, OSError, ValueError) as exc:
            print(f"selfenc: error: {exc}", file=sys.stderr)
            return 1


if __name__ == "__main__":
    sys.exit(main())
