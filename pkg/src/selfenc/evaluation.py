"""Cross-validated accuracy with seeded random hyperparameter search, and benchmark reports.

Methods are small objects with two hooks:

``tune(x, y, trials, rng)``
    choose hyperparameters from training-fold data only (returns ``None`` when
    there is nothing to tune);
``fit_predict(x_train, y_train, x_test, trial)``
    train on one set and label another.

:func:`cross_validate` calls ``tune`` on the training portion of each fold and
only then ``fit_predict`` on the held-out fold, so test rows never influence
selection.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, min_max_apply, min_max_params, resolve_dataset, stratified_holdout, stratified_kfold
from .encoder import SelfEncoderConfig, fit, with_overrides
from .linalg import Rng
from .neighbors import DEFAULT_K, euclidean_knn_predict_batch, se_knn_predict_batch
from .nn import Activation
from .optim import TrainingDiverged

log = logging.getLogger(__name__)

LR_BOUNDS = (0.001, 2.0)
DEFAULT_TRIALS = 20
DEFAULT_FOLDS = 5
REPORT_FORMAT = "selfenc-benchmark"


def accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(predictions) == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    if predictions.shape != labels.shape:
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    return float(np.mean(predictions == labels))


@dataclass(frozen=True)
class TrialConfig:
    lr: float
    output_normalization: str
    seed: int
    standardize_inputs: bool = True

    def __post_init__(self):
        lo, hi = LR_BOUNDS
        if not lo <= self.lr <= hi:
            raise ValueError(f"learning rate {self.lr} outside [{lo}, {hi}]")


def draw_trial(rng: Rng, normalizations=("sigmoid", "softmax"), conditionings=(True, False)) -> TrialConfig:
    """Log-uniform learning rate, then output normalization, weight seed and input conditioning."""
    lo, hi = LR_BOUNDS
    lr = float(np.exp(rng.uniform(math.log(lo), math.log(hi))))
    lr = min(max(lr, lo), hi)
    norm = normalizations[int(rng.generator.integers(len(normalizations)))]
    seed = int(rng.generator.integers(2**63))
    standardize = bool(conditionings[int(rng.generator.integers(len(conditionings)))])
    return TrialConfig(lr, norm, seed, standardize)


class EuclideanKNN:
    def __init__(self, k: int = DEFAULT_K, normalize: bool = False):
        self.k = k
        self.normalize = normalize
        self.name = "knn-normalized" if normalize else "knn"

    def describe(self) -> dict:
        return {"method": self.name, "k": self.k}

    def tune(self, x, y, trials, rng):
        return None

    def fit_predict(self, x_train, y_train, x_test, trial=None):
        if self.normalize:
            # scaling fitted on the training rows only
            params = min_max_params(x_train)
            x_train, x_test = min_max_apply(x_train, params), min_max_apply(x_test, params)
        return euclidean_knn_predict_batch(x_train, y_train, x_test, self.k)


class SelfEncoderKNN:
    """k-NN over the ranking of a self-encoder fitted on the training rows.

    Each trial draws a learning rate, an output normalization and whether to
    train in standardized input coordinates.  Raw coordinates keep whatever
    prior the feature units carry; standardized ones make the result
    insensitive to per-feature rescaling.  The inner validation split decides.
    """

    def __init__(
        self,
        k: int = DEFAULT_K,
        hidden_dims=(),
        sample_size: int | None = None,
        base: SelfEncoderConfig | None = None,
        normalizations=("sigmoid", "softmax"),
        conditionings=(True, False),
        holdout: float = 0.2,
        name: str | None = None,
    ):
        self.k = k
        self.base = with_overrides(base or SelfEncoderConfig(), hidden_dims=tuple(hidden_dims), sample_size=sample_size)
        self.normalizations = tuple(Activation.parse(n).value for n in normalizations)
        if not conditionings:
            raise ValueError("need at least one input conditioning choice")
        self.conditionings = tuple(bool(c) for c in conditionings)
        self.holdout = holdout
        self.name = name or _se_name(self.base)

    def describe(self) -> dict:
        return {
            "method": self.name,
            "k": self.k,
            "encoder": self.base.to_dict(),
            "lr_bounds": list(LR_BOUNDS),
            "normalizations": list(self.normalizations),
            "standardize_inputs": list(self.conditionings),
            "holdout": self.holdout,
        }

    def config_for(self, trial: TrialConfig) -> SelfEncoderConfig:
        return with_overrides(
            self.base,
            initial_lr=trial.lr,
            output_normalization=trial.output_normalization,
            seed=trial.seed,
            standardize_inputs=trial.standardize_inputs,
        )

    def fit_predict(self, x_train, y_train, x_test, trial: TrialConfig):
        model = fit(x_train, self.config_for(trial))
        k = min(self.k, model.n_anchors)
        return se_knn_predict_batch(model, y_train, x_test, k)

    def tune(self, x, y, trials: int, rng: Rng) -> TrialConfig:
        if trials < 1:
            raise ValueError(f"need at least one trial, got {trials}")
        keep, held = stratified_holdout(y, self.holdout, rng.derive(0))
        best, best_acc = None, -math.inf
        for t in range(trials):
            trial = draw_trial(rng.derive(1, t), self.normalizations, self.conditionings)
            try:
                acc = accuracy(self.fit_predict(x[keep], y[keep], x[held], trial), y[held])
            except TrainingDiverged as exc:
                log.info("trial %d discarded: %s", t, exc)
                continue
            if acc > best_acc:
                best, best_acc = trial, acc
        if best is None:
            raise TrainingDiverged(f"all {trials} trials diverged")
        return best


def _se_name(cfg: SelfEncoderConfig) -> str:
    name = "se-hidden" if cfg.hidden_dims else "se"
    return name + "-sampling" if cfg.sample_size else name


def make_method(name: str, k: int = DEFAULT_K, base: SelfEncoderConfig | None = None, hidden: int = 20, sample_size: int = 100):
    """Build a method from its name: knn, knn-normalized, se, se-hidden, se-sampling, se-hidden-sampling."""
    if name == "knn":
        return EuclideanKNN(k)
    if name == "knn-normalized":
        return EuclideanKNN(k, normalize=True)
    if name in ("se", "se-hidden", "se-sampling", "se-hidden-sampling"):
        hidden_dims = (hidden,) if "hidden" in name else ()
        s = sample_size if "sampling" in name else None
        return SelfEncoderKNN(k, hidden_dims, s, base=base, name=name)
    raise ValueError(f"unknown method {name!r}")


METHOD_NAMES = ("knn", "knn-normalized", "se", "se-hidden", "se-sampling", "se-hidden-sampling")


@dataclass
class CVReport:
    dataset: str
    method: str
    folds: list[float]
    mean: float
    std: float
    seed: int
    config: list[dict | None] = field(default_factory=list)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def check(self, tol: float = 1e-12) -> None:
        mean, std = summarize(self.folds)
        if abs(mean - self.mean) > tol or abs(std - self.std) > tol:
            raise AssertionError(f"report summary ({self.mean}, {self.std}) != recomputed ({mean}, {std})")


def summarize(values) -> tuple[float, float]:
    """Mean and sample standard deviation (divisor K - 1)."""
    values = np.asarray(values, dtype=np.float64)
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return float(values.mean()), std


def cross_validate(d: Dataset, method, n_folds: int = DEFAULT_FOLDS, trials: int = DEFAULT_TRIALS, rng: Rng | None = None) -> CVReport:
    rng = rng or Rng(0)
    if trials < 1:
        raise ValueError(f"need at least one trial, got {trials}")
    start = time.perf_counter()
    split = stratified_kfold(d.labels, n_folds, rng.derive(0))
    accs, configs = [], []
    for i, (train_idx, test_idx) in enumerate(split):
        x_tr, y_tr = d.features[train_idx], d.labels[train_idx]
        trial = method.tune(x_tr, y_tr, trials, rng.derive(1, i))
        preds = method.fit_predict(x_tr, y_tr, d.features[test_idx], trial)
        accs.append(accuracy(preds, d.labels[test_idx]))
        configs.append(asdict(trial) if trial is not None else None)
    mean, std = summarize(accs)
    report = CVReport(d.name, method.name, accs, mean, std, rng.seed, configs, time.perf_counter() - start)
    report.check()
    return report


def run_benchmark(
    datasets,
    methods,
    output_path=None,
    seed: int = 0,
    n_folds: int = DEFAULT_FOLDS,
    trials: int = DEFAULT_TRIALS,
    k: int = DEFAULT_K,
    base: SelfEncoderConfig | None = None,
) -> dict:
    """Cross-validate every method on every dataset and write one JSON report.

    ``datasets`` holds :class:`Dataset` objects or specs accepted by
    :func:`selfenc.data.resolve_dataset`.  A dataset that fails to load is
    recorded with its error and the rest still run.  With a fixed seed the
    report is reproducible apart from the ``seconds`` fields.
    """
    method_objs = [m if not isinstance(m, str) else make_method(m, k, base) for m in methods]
    report = {
        "format": REPORT_FORMAT,
        "version": 1,
        "seed": seed,
        "config": {
            "folds": n_folds,
            "trials": trials,
            "methods": [m.describe() for m in method_objs],
        },
        "datasets": [],
    }
    for di, spec in enumerate(datasets):
        try:
            d = spec if isinstance(spec, Dataset) else resolve_dataset(spec)
        except Exception as exc:
            log.error("could not load dataset %s: %s", spec, exc)
            report["datasets"].append({"dataset": str(spec), "error": str(exc)})
            continue
        entry = {
            "dataset": d.name,
            "n_samples": d.n_samples,
            "n_features": d.n_features,
            "n_classes": d.n_classes,
            "results": [],
        }
        for method in method_objs:
            # every method sees the same folds for a given dataset
            cv = cross_validate(d, method, n_folds, trials, Rng(seed).derive(di))
            entry["results"].append(cv.to_dict())
            log.info("%s / %s: %.3f +- %.3f", d.name, method.name, cv.mean, cv.std)
        report["datasets"].append(entry)
    if output_path is not None:
        Path(output_path).write_text(json.dumps(report, indent=2) + "\n")
    return report


def strip_timing(report: dict) -> dict:
    """Copy of a benchmark report without the ``seconds`` fields."""
    out = json.loads(json.dumps(report))
    for entry in out.get("datasets", []):
        for res in entry.get("results", []):
            res.pop("seconds", None)
    return out
