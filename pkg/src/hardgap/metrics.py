"""ROC operating points and equal error rate.

Decision rule at threshold ``t``: call bonafide iff ``score >= t``.

    far(t) = #{spoof with score >= t} / n_spoof
    frr(t) = #{bonafide with score < t} / n_bonafide

Polarity is fixed; scores are never flipped, so anti-correlated systems
give an EER above 0.5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MetricsError
from .manifest import ScoreSet


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    far: float
    frr: float


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    n_bonafide: int
    n_spoof: int

    @property
    def percent(self) -> float:
        return 100.0 * self.eer


def _split_scores(scores) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(scores, ScoreSet):
        bona, spoof = scores.bonafide_scores, scores.spoof_scores
    else:
        bona, spoof = (np.asarray(x, dtype=np.float64).ravel() for x in scores)
    if bona.size == 0 or spoof.size == 0:
        raise MetricsError(
            f"EER needs both classes (got {bona.size} bonafide, {spoof.size} spoof)"
        )
    if not (np.all(np.isfinite(bona)) and np.all(np.isfinite(spoof))):
        raise MetricsError("non-finite score")
    return bona, spoof


def operating_points(scores) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrays (thresholds, far, frr) with -inf/+inf sentinels at both ends.

    ``scores`` is a ScoreSet or a ``(bonafide, spoof)`` pair of arrays.
    """
    bona, spoof = _split_scores(scores)
    thr = np.unique(np.concatenate([bona, spoof]))
    bona_sorted = np.sort(bona)
    spoof_sorted = np.sort(spoof)
    far = (spoof.size - np.searchsorted(spoof_sorted, thr, side="left")) / spoof.size
    frr = np.searchsorted(bona_sorted, thr, side="left") / bona.size
    thr = np.concatenate([[-np.inf], thr, [np.inf]])
    far = np.concatenate([[1.0], far, [0.0]])
    frr = np.concatenate([[0.0], frr, [1.0]])
    return thr, far, frr


def roc_points(scores) -> list[RocPoint]:
    thr, far, frr = operating_points(scores)
    return [RocPoint(float(t), float(a), float(r)) for t, a, r in zip(thr, far, frr)]


def _eer_from_points(thr: np.ndarray, far: np.ndarray, frr: np.ndarray) -> tuple[float, float]:
    diff = far - frr
    exact = np.flatnonzero(diff == 0)
    if exact.size:
        i = int(exact[0])
        return float(far[i]), float(thr[i])
    # diff goes from +1 at -inf to -1 at +inf and is non-increasing
    i = int(np.flatnonzero(diff < 0)[0]) - 1
    d0, d1 = diff[i], diff[i + 1]
    alpha = d0 / (d0 - d1)
    value = far[i] + alpha * (far[i + 1] - far[i])
    t0, t1 = thr[i], thr[i + 1]
    if math.isinf(t0):
        t = t1
    elif math.isinf(t1):
        t = t0
    else:
        t = t0 + alpha * (t1 - t0)
    return float(value), float(t)


def eer(scores) -> EerResult:
    """Equal error rate with linear interpolation at the far/frr crossing.

    If some operating point has far == frr exactly, the first such point
    (lowest threshold) is returned. Otherwise the two straight segments
    joining the far and frr values at the adjacent points where
    ``far - frr`` changes sign are intersected. When one of those points
    is an infinite sentinel the reported threshold is the finite one.
    """
    bona, spoof = _split_scores(scores)
    thr, far, frr = operating_points((bona, spoof))
    value, t = _eer_from_points(thr, far, frr)
    return EerResult(value, t, int(bona.size), int(spoof.size))
