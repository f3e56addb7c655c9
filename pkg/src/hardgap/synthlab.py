"""Synthetic two-domain detection problems with analytic EER targets.

Each domain is a pair of isotropic Gaussians (bonafide / spoof) sharing one
standard deviation. For such a pair the best achievable EER is
``Phi(-||mu_b - mu_s|| / (2 sigma))`` and a linear scorer reaches it, so a
logistic-regression detector gives known in-domain cells. A detector that
learned the direction of domain D scores domain D' with EER
``Phi(-(u . (mu_b' - mu_s')) / (2 sigma'))`` where ``u`` is D's unit
mean-difference direction. Together these give oracle targets for the
hardness and difference gaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decomposition import GapDecomposition, TrialAggregate, aggregate_trials, decompose
from .errors import GapError, TrainingDivergence
from .manifest import ScoreSet, stratified_split_indices
from .metrics import eer


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class DomainSpec:
    dim: int
    mean_bonafide: tuple[float, ...]
    mean_spoof: tuple[float, ...]
    sigma: float = 1.0

    def __post_init__(self):
        mb = tuple(float(v) for v in np.ravel(self.mean_bonafide))
        ms = tuple(float(v) for v in np.ravel(self.mean_spoof))
        object.__setattr__(self, "mean_bonafide", mb)
        object.__setattr__(self, "mean_spoof", ms)
        if self.dim < 1:
            raise GapError(f"dim must be >= 1, got {self.dim}")
        if not self.sigma > 0:
            raise GapError(f"sigma must be > 0, got {self.sigma}")
        if len(mb) != self.dim or len(ms) != self.dim:
            raise GapError("mean vectors must have length dim")

    @classmethod
    def symmetric(cls, direction: Sequence[float], sigma: float = 1.0) -> "DomainSpec":
        """Class means at +direction (bonafide) and -direction (spoof)."""
        d = np.asarray(direction, dtype=np.float64)
        return cls(d.size, tuple(d), tuple(-d), sigma)

    @property
    def mean_diff(self) -> np.ndarray:
        return np.asarray(self.mean_bonafide) - np.asarray(self.mean_spoof)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "mean_bonafide": list(self.mean_bonafide),
            "mean_spoof": list(self.mean_spoof),
            "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        return cls(int(d["dim"]), tuple(d["mean_bonafide"]), tuple(d["mean_spoof"]), float(d.get("sigma", 1.0)))


@dataclass(frozen=True)
class FeatureSet:
    x: np.ndarray
    is_bonafide: np.ndarray
    spec_tag: str = ""

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[0] != self.is_bonafide.shape[0]:
            raise GapError("features must be (n, dim) with one label per row")
        if self.is_bonafide.all() or not self.is_bonafide.any():
            raise GapError("feature set needs both classes")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def take(self, idx: np.ndarray) -> "FeatureSet":
        return FeatureSet(self.x[idx], self.is_bonafide[idx], self.spec_tag)


@dataclass(frozen=True)
class ToyModel:
    weights: np.ndarray
    bias: float
    epochs_run: int = field(default=0, compare=False)
    train_eer_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise TrainingDivergence(self.epochs_run, math.nan)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 500
    early_stop_delta: float = 5e-3
    patience: int = 1
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise GapError("learning_rate must be > 0")
        if self.patience < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise GapError("patience, batch_size and max_epochs must be >= 1")


def gen_domain(spec: DomainSpec, n_per_class: int, seed: int, tag: str = "") -> FeatureSet:
    """``n_per_class`` bonafide rows followed by ``n_per_class`` spoof rows."""
    if n_per_class < 1:
        raise GapError("n_per_class must be >= 1")
    rng = np.random.default_rng(np.uint64(seed))
    xb = np.asarray(spec.mean_bonafide) + spec.sigma * rng.standard_normal((n_per_class, spec.dim))
    xs = np.asarray(spec.mean_spoof) + spec.sigma * rng.standard_normal((n_per_class, spec.dim))
    labels = np.concatenate([np.ones(n_per_class, bool), np.zeros(n_per_class, bool)])
    return FeatureSet(np.vstack([xb, xs]), labels, tag)


def bayes_eer(spec: DomainSpec) -> float:
    dist = float(np.linalg.norm(spec.mean_diff))
    return norm_cdf(-dist / (2.0 * spec.sigma))


def cross_eer(source: DomainSpec, target: DomainSpec) -> float:
    """EER on ``target`` of the Bayes-optimal linear scorer for ``source``.

    Assumes a symmetric target (means mirrored around a point on the
    source's decision boundary), which holds for every built-in preset.
    """
    d = source.mean_diff
    norm = np.linalg.norm(d)
    if norm == 0:
        return 0.5
    proj = float(np.dot(d / norm, target.mean_diff))
    return norm_cdf(-proj / (2.0 * target.sigma))


# --------------------------------------------------------------------------
# logistic toy detector


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray) -> float:
    """Mean negative log-likelihood, ``y`` in {0, 1} with 1 = bonafide."""
    z = x @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def logistic_grad(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    r = (_sigmoid(x @ w + b) - y) / x.shape[0]
    return x.T @ r, float(np.sum(r))


def train_toy(features: FeatureSet, cfg: TrainConfig = TrainConfig()) -> ToyModel:
    """Mini-batch gradient descent on the logistic loss with train-EER early stopping.

    After every epoch the EER on the training set is measured. An epoch
    counts as an improvement only if it beats the best EER so far by more
    than ``early_stop_delta``; after ``patience`` epochs in a row without
    one, training stops. The parameters of the lowest-EER epoch are
    returned.
    """
    x = np.asarray(features.x, dtype=np.float64)
    y = features.is_bonafide.astype(np.float64)
    n = x.shape[0]
    rng = np.random.default_rng(np.uint64(cfg.seed))
    w = np.zeros(x.shape[1])
    b = 0.0
    best = (math.inf, w.copy(), b)
    history = []
    stale = 0
    epoch = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.max_epochs + 1):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                gw, gb = logistic_grad(w, b, x[idx], y[idx])
                w -= cfg.learning_rate * gw
                b -= cfg.learning_rate * gb
            loss = logistic_loss(w, b, x, y)
            if not (math.isfinite(loss) and np.all(np.isfinite(w)) and math.isfinite(b)):
                raise TrainingDivergence(epoch, loss)
            e = _train_eer(x, w, b, features.is_bonafide)
            history.append(e)
            if e < best[0] - cfg.early_stop_delta:
                stale = 0
            else:
                stale += 1
            if e < best[0]:
                best = (e, w.copy(), b)
            if stale >= cfg.patience:
                break
    return ToyModel(best[1], float(best[2]), epochs_run=epoch, train_eer_history=tuple(history))


def _train_eer(x: np.ndarray, w: np.ndarray, b: float, is_bona: np.ndarray) -> float:
    s = x @ w + b
    return eer((s[is_bona], s[~is_bona])).eer


def score_toy(model: ToyModel, features: FeatureSet, id_prefix: str = "synth-0") -> ScoreSet:
    if features.dim != model.weights.shape[0]:
        raise GapError(f"model expects dim {model.weights.shape[0]}, features have {features.dim}")
    s = features.x @ model.weights + model.bias
    ids = tuple(f"{id_prefix}-{i}" for i in range(len(features)))
    return ScoreSet(ids, s, features.is_bonafide)


# --------------------------------------------------------------------------
# experiments


PRESETS: dict[str, tuple[DomainSpec, DomainSpec]] = {}


def _e(i: int, dim: int = 4, scale: float = 1.0) -> np.ndarray:
    v = np.zeros(dim)
    v[i] = scale
    return v


PRESETS["identical"] = (DomainSpec.symmetric(_e(0)), DomainSpec.symmetric(_e(0)))
PRESETS["hardness"] = (DomainSpec.symmetric(_e(0)), DomainSpec.symmetric(_e(0), sigma=2.0))
PRESETS["difference"] = (DomainSpec.symmetric(_e(0)), DomainSpec.symmetric(_e(1)))
PRESETS["mixed"] = (
    DomainSpec.symmetric(_e(0)),
    DomainSpec.symmetric((_e(0) + _e(1)) / math.sqrt(2.0), sigma=1.5),
)

# (hardness tolerance, difference tolerance) on the trial-mean gaps
PRESET_TOLERANCES = {
    "identical": (0.02, 0.02),
    "hardness": (0.03, 0.03),
    "difference": (0.03, 0.05),
    "mixed": (0.03, 0.05),
}
DOMINANCE_SHARE = 0.8


def oracle_gaps(spec_d: DomainSpec, spec_dp: DomainSpec) -> GapDecomposition:
    return decompose(bayes_eer(spec_d), bayes_eer(spec_dp), cross_eer(spec_d, spec_dp))


@dataclass(frozen=True)
class ExperimentResult:
    trials: tuple[GapDecomposition, ...]
    aggregates: dict[str, TrialAggregate]
    oracle: GapDecomposition
    trial_seeds: tuple[int, ...]
    metadata: dict

    def verdict(self) -> str:
        perf = self.aggregates["performance_gap"].mean
        hard = self.aggregates["hardness_gap"].mean
        diff = self.aggregates["difference_gap"].mean
        if abs(perf) < 0.02:
            return "no-gap"
        if hard / perf >= DOMINANCE_SHARE:
            return "hardness-dominated"
        if diff / perf >= DOMINANCE_SHARE:
            return "difference-dominated"
        return "mixed"

    def within(self, hard_tol: float, diff_tol: float) -> dict[str, bool]:
        return {
            "hardness_gap": abs(self.aggregates["hardness_gap"].mean - self.oracle.hardness_gap) <= hard_tol,
            "difference_gap": abs(self.aggregates["difference_gap"].mean - self.oracle.difference_gap) <= diff_tol,
        }


def trial_seeds(master_seed: int, n_trials: int) -> list[int]:
    ss = np.random.SeedSequence(int(master_seed))
    return [int(c.generate_state(1, np.uint64)[0]) for c in ss.spawn(n_trials)]


@dataclass(frozen=True)
class TrialData:
    """Test-partition scores for the three cells of one trial."""

    decomposition: GapDecomposition
    in_in: ScoreSet
    outdom_outdom: ScoreSet
    in_out: ScoreSet


def run_trial(
    spec_d: DomainSpec,
    spec_dp: DomainSpec,
    n_per_class: int,
    cfg: TrainConfig,
    seed: int,
    trial_index: int = 0,
    ratio: float = 0.8,
) -> TrialData:
    """One randomized trial: fresh data, fresh 80/20 splits, fresh batch order."""
    if spec_d.dim != spec_dp.dim:
        raise GapError("domains must share feature dimensionality")
    s = np.random.SeedSequence(int(seed)).generate_state(6, np.uint64)
    data_d = gen_domain(spec_d, n_per_class, int(s[0]), "D")
    data_dp = gen_domain(spec_dp, n_per_class, int(s[1]), "D'")
    tr_d, te_d = stratified_split_indices(data_d.is_bonafide, ratio, int(s[2]))
    tr_dp, te_dp = stratified_split_indices(data_dp.is_bonafide, ratio, int(s[3]))
    model_d = train_toy(data_d.take(tr_d), _with_seed(cfg, int(s[4])))
    model_dp = train_toy(data_dp.take(tr_dp), _with_seed(cfg, int(s[5])))
    prefix = f"synth-{trial_index}"
    in_in = score_toy(model_d, data_d.take(te_d), prefix + "-dd")
    outdom = score_toy(model_dp, data_dp.take(te_dp), prefix + "-pp")
    in_out = score_toy(model_d, data_dp.take(te_dp), prefix + "-dp")
    dec = decompose(eer(in_in).eer, eer(outdom).eer, eer(in_out).eer)
    return TrialData(dec, in_in, outdom, in_out)


def _with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(cfg.learning_rate, cfg.max_epochs, cfg.early_stop_delta, cfg.patience, cfg.batch_size, seed)


def run_experiment(
    spec_d: DomainSpec,
    spec_dp: DomainSpec,
    n_per_class: int = 10_000,
    cfg: TrainConfig = TrainConfig(),
    n_trials: int = 5,
    keep_scores: bool = False,
) -> ExperimentResult | tuple[ExperimentResult, list[TrialData]]:
    """Full 2x2-cell procedure repeated over ``n_trials`` independent trials.

    Trial seeds are spawned from ``cfg.seed``; each trial re-draws the data,
    the 80/20 splits and the mini-batch order.
    """
    if n_trials < 1:
        raise GapError("n_trials must be >= 1")
    seeds = trial_seeds(cfg.seed, n_trials)
    data = [run_trial(spec_d, spec_dp, n_per_class, cfg, sd, i) for i, sd in enumerate(seeds)]
    trials = tuple(t.decomposition for t in data)
    result = ExperimentResult(
        trials,
        aggregate_trials(trials),
        oracle_gaps(spec_d, spec_dp),
        tuple(seeds),
        {
            "n_per_class": n_per_class,
            "n_trials": n_trials,
            "split_ratio": 0.8,
            "per_trial_rerandomized": ["data", "split", "batch_order"],
        },
    )
    if keep_scores:
        return result, data
    return result
