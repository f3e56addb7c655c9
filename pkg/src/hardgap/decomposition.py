"""Performance gap = hardness gap + difference gap.

With ``D`` the training database and ``D'`` the out-of-domain one::

    performance = EER(D->D')  - EER(D->D)
    hardness    = EER(D'->D') - EER(D->D)
    difference  = EER(D->D')  - EER(D'->D')

Positive values mean the out-of-domain side is worse (higher EER).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .errors import GapError

IDENTITY_TOL = 1e-12

GAP_FIELDS = ("performance_gap", "hardness_gap", "difference_gap")
CELL_FIELDS = ("eer_in_in", "eer_outdom_outdom", "eer_in_out")


def _check_fraction(name: str, x: float) -> float:
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise GapError(f"{name} must be an EER fraction in [0, 1], got {x!r}")
    return x


@dataclass(frozen=True)
class EvalCell:
    train_domain: str
    test_domain: str
    eer: float

    def __post_init__(self):
        _check_fraction("eer", self.eer)

    @property
    def in_domain(self) -> bool:
        return self.train_domain == self.test_domain


@dataclass(frozen=True)
class GapDecomposition:
    eer_in_in: float
    eer_outdom_outdom: float
    eer_in_out: float
    performance_gap: float
    hardness_gap: float
    difference_gap: float

    def __post_init__(self):
        residual = self.performance_gap - (self.hardness_gap + self.difference_gap)
        if abs(residual) > IDENTITY_TOL:
            raise GapError(f"gap identity violated by {residual:.3g}")

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @property
    def hardness_share(self) -> float:
        """Fraction of the performance gap explained by hardness (nan if no gap)."""
        if self.performance_gap == 0:
            return math.nan
        return self.hardness_gap / self.performance_gap


def decompose(eer_in_in: float, eer_outdom_outdom: float, eer_in_out: float) -> GapDecomposition:
    a = _check_fraction("eer_in_in", eer_in_in)
    b = _check_fraction("eer_outdom_outdom", eer_outdom_outdom)
    c = _check_fraction("eer_in_out", eer_in_out)
    return GapDecomposition(a, b, c, c - a, b - a, c - b)


def decompose_cells(cells: Iterable[EvalCell], source: str, target: str) -> GapDecomposition:
    """Pick the three needed cells out of a train/test matrix."""
    table = {(c.train_domain, c.test_domain): c.eer for c in cells}
    need = [(source, source), (target, target), (source, target)]
    missing = [f"{tr}->{te}" for tr, te in need if (tr, te) not in table]
    if missing:
        raise GapError("missing evaluation cell(s): " + ", ".join(missing))
    return decompose(*(table[k] for k in need))


@dataclass(frozen=True)
class TrialAggregate:
    mean: float
    std: float
    n_trials: int

    @property
    def degenerate(self) -> bool:
        # a single trial has no spread estimate
        return self.n_trials == 1

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n_trials": self.n_trials, "degenerate": self.degenerate}


def aggregate_trials(trials: Sequence[GapDecomposition]) -> dict[str, TrialAggregate]:
    """Mean and sample (n-1) standard deviation of every field across trials."""
    if len(trials) == 0:
        raise GapError("cannot aggregate an empty trial list")
    out = {}
    for f in fields(GapDecomposition):
        vals = np.array([getattr(t, f.name) for t in trials], dtype=np.float64)
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out[f.name] = TrialAggregate(float(np.mean(vals)), std, len(vals))
    return out


@dataclass(frozen=True)
class ScatterRow:
    model: str
    in_domain_eer: float
    out_of_domain_eer: float

    @property
    def diagonal(self) -> float:
        return self.in_domain_eer

    @property
    def vertical_gap(self) -> float:
        return self.out_of_domain_eer - self.in_domain_eer

    @property
    def ideal(self) -> bool:
        return self.out_of_domain_eer == self.in_domain_eer


SCATTER_COLUMNS = ("model", "in_domain_eer", "out_of_domain_eer", "diagonal", "vertical_gap")


def scatter_table(cells: Iterable[tuple[str, float, float]]) -> list[ScatterRow]:
    """In-domain (x) vs out-of-domain (y) EER per model; y = x is ideal generalization."""
    rows = []
    for tag, x, y in cells:
        rows.append(ScatterRow(str(tag), _check_fraction("in-domain eer", x), _check_fraction("out-of-domain eer", y)))
    return rows


def scatter_csv(rows: Sequence[ScatterRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCATTER_COLUMNS)
    for r in rows:
        w.writerow([r.model] + [repr(v) for v in (r.in_domain_eer, r.out_of_domain_eer, r.diagonal, r.vertical_gap)])
    return buf.getvalue()
