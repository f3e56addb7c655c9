"""Manifests, stratified train/test partitions and score-file binding.

Manifest file format (UTF-8, tab separated, ``#`` comments)::

    <id>\t<path or ->\t<bonafide|spoof>

Score file format (whitespace separated)::

    <id> <score>

Relative audio paths are resolved against the directory of the manifest file.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ManifestError, ScoreFileError

log = logging.getLogger(__name__)


class Label(str, enum.Enum):
    BONAFIDE = "bonafide"
    SPOOF = "spoof"

    @classmethod
    def parse(cls, token: str) -> "Label":
        try:
            return cls(token)
        except ValueError:
            raise ValueError(f"unknown label token {token!r} (expected 'bonafide' or 'spoof')") from None


# Class order used everywhere a per-class loop needs a fixed order.
CLASS_ORDER = (Label.BONAFIDE, Label.SPOOF)


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    path: Path | None
    label: Label
    domain_tag: str

    def __post_init__(self):
        if not self.id or any(c.isspace() for c in self.id):
            raise ManifestError(f"invalid utterance id {self.id!r}")
        if not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label.parse(self.label))


@dataclass(frozen=True)
class Manifest:
    records: tuple[UtteranceRecord, ...]
    domain_tag: str

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise ManifestError(f"duplicate id {rec.id!r}")
            seen.add(rec.id)
            if rec.domain_tag != self.domain_tag:
                raise ManifestError(
                    f"record {rec.id!r} has domain {rec.domain_tag!r}, manifest is {self.domain_tag!r}"
                )
        for cls in CLASS_ORDER:
            if not any(r.label is cls for r in self.records):
                raise ManifestError(f"manifest {self.domain_tag!r} has no {cls.value} records")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def labels(self) -> dict[str, Label]:
        return {r.id: r.label for r in self.records}

    def subset(self, ids: Iterable[str], domain_tag: str | None = None) -> "Manifest":
        """Records whose id is in ``ids``, in original manifest order."""
        keep = set(ids)
        tag = self.domain_tag if domain_tag is None else domain_tag
        recs = [
            UtteranceRecord(r.id, r.path, r.label, tag) for r in self.records if r.id in keep
        ]
        return Manifest(tuple(recs), tag)

    def write(self, path: str | os.PathLike) -> None:
        write_manifest(self, path)


def _parse_manifest_lines(lines: Iterable[str], domain_tag: str, source: str, base: Path):
    records = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ManifestError(f"expected 3 tab-separated fields, got {len(parts)}", source, lineno)
        uid, p, lab = (s.strip() for s in parts)
        if not uid:
            raise ManifestError("empty id", source, lineno)
        if uid in seen:
            raise ManifestError(f"duplicate id {uid!r} (first on line {seen[uid]})", source, lineno)
        seen[uid] = lineno
        try:
            label = Label.parse(lab)
        except ValueError as exc:
            raise ManifestError(str(exc), source, lineno) from None
        audio = None if p in ("", "-") else Path(p)
        if audio is not None and not audio.is_absolute():
            audio = Path(os.path.normpath(base / audio))
        try:
            records.append(UtteranceRecord(uid, audio, label, domain_tag))
        except ManifestError as exc:
            raise ManifestError(str(exc), source, lineno) from None
    try:
        return Manifest(tuple(records), domain_tag)
    except ManifestError as exc:
        raise ManifestError(str(exc), source) from None


def load_manifest(path: str | os.PathLike, domain_tag: str | None = None) -> Manifest:
    """Parse and validate a manifest file. ``domain_tag`` defaults to the file stem."""
    path = Path(path)
    if domain_tag is None:
        domain_tag = path.name.split(".")[0]
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ManifestError(f"not UTF-8: {exc}", str(path)) from None
    except OSError as exc:
        raise ManifestError(f"cannot read: {exc.strerror}", str(path)) from None
    return _parse_manifest_lines(text.splitlines(), domain_tag, str(path), path.parent.resolve())


def format_manifest(manifest: Manifest, relative_to: Path | None = None) -> str:
    out = []
    for r in manifest.records:
        if r.path is None:
            p = "-"
        elif relative_to is not None:
            p = os.path.relpath(Path(r.path).resolve(), relative_to.resolve())
        else:
            p = str(r.path)
        out.append(f"{r.id}\t{p}\t{r.label.value}\n")
    return "".join(out)


def write_manifest(manifest: Manifest, path: str | os.PathLike) -> None:
    path = Path(path)
    path.write_text(format_manifest(manifest, relative_to=path.parent), encoding="utf-8")


# --------------------------------------------------------------------------
# stratified split


@dataclass(frozen=True)
class Partition:
    train_ids: frozenset[str]
    test_ids: frozenset[str]
    seed: int
    ratio: float

    def __post_init__(self):
        if self.train_ids & self.test_ids:
            raise ManifestError("train and test partitions overlap")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def train_count(class_size: int, ratio: float) -> int:
    """Per-class train count: round-half-up, clamped to leave one record per side."""
    if class_size < 2:
        raise ManifestError(f"class of size {class_size} cannot be split (need >= 2)")
    k = _round_half_up(ratio * class_size)
    return min(max(k, 1), class_size - 1)


def stratified_split_indices(
    labels: Sequence[Label] | np.ndarray, ratio: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Index form of :func:`split`; ``labels`` may be Labels or a bonafide bool mask.

    One PCG64 stream seeded with ``seed`` permutes each class in turn
    (bonafide first, then spoof); the first ``train_count`` of each
    permutation go to train. Returned index arrays are sorted.
    """
    if not 0.0 < ratio < 1.0:
        raise ManifestError(f"ratio must be in (0, 1), got {ratio}")
    if isinstance(labels, np.ndarray) and labels.dtype == bool:
        is_bona = labels
    else:
        is_bona = np.array([Label(x) is Label.BONAFIDE for x in labels], dtype=bool)
    rng = np.random.default_rng(np.uint64(seed))
    train, test = [], []
    for cls_mask, name in ((is_bona, "bonafide"), (~is_bona, "spoof")):
        members = np.flatnonzero(cls_mask)
        try:
            k = train_count(len(members), ratio)
        except ManifestError:
            raise ManifestError(
                f"{name} class has {len(members)} record(s); cannot place >= 1 on each side"
            ) from None
        perm = members[rng.permutation(len(members))]
        train.append(perm[:k])
        test.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(manifest: Manifest, ratio: float = 0.8, seed: int = 0) -> Partition:
    """Stratified random train/test split of a manifest."""
    is_bona = np.array([r.label is Label.BONAFIDE for r in manifest.records], dtype=bool)
    tr, te = stratified_split_indices(is_bona, ratio, seed)
    ids = manifest.ids
    return Partition(
        frozenset(ids[i] for i in tr), frozenset(ids[i] for i in te), int(seed), float(ratio)
    )


# --------------------------------------------------------------------------
# scores


@dataclass(frozen=True)
class ScoreSet:
    """Detector scores bound to labels. Higher score means more bonafide."""

    ids: tuple[str, ...]
    scores: np.ndarray
    is_bonafide: np.ndarray
    n_extra: int = field(default=0, compare=False)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.is_bonafide, dtype=bool)
        ids = tuple(self.ids)
        if not (len(ids) == scores.shape[0] == labels.shape[0]) or scores.ndim != 1:
            raise ValueError("ids, scores and labels must be 1-D and of equal length")
        if not np.all(np.isfinite(scores)):
            bad = ids[int(np.flatnonzero(~np.isfinite(scores))[0])]
            raise ScoreFileError(f"non-finite score for {bad!r}")
        if len(set(ids)) != len(ids):
            raise ScoreFileError("duplicate ids in score set")
        scores.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "is_bonafide", labels)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_arrays(cls, bonafide, spoof, prefix: str = "s") -> "ScoreSet":
        b = np.asarray(bonafide, dtype=np.float64).ravel()
        s = np.asarray(spoof, dtype=np.float64).ravel()
        ids = [f"{prefix}-b{i}" for i in range(len(b))] + [f"{prefix}-s{i}" for i in range(len(s))]
        lab = np.concatenate([np.ones(len(b), bool), np.zeros(len(s), bool)])
        return cls(tuple(ids), np.concatenate([b, s]), lab)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def bonafide_scores(self) -> np.ndarray:
        return self.scores[self.is_bonafide]

    @property
    def spoof_scores(self) -> np.ndarray:
        return self.scores[~self.is_bonafide]

    def items(self):
        for i, s, b in zip(self.ids, self.scores, self.is_bonafide):
            yield i, (float(s), Label.BONAFIDE if b else Label.SPOOF)


def read_score_file(path: str | os.PathLike) -> dict[str, float]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScoreFileError(f"cannot read: {exc.strerror}", str(path)) from None
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split()
        if len(parts) != 2:
            raise ScoreFileError(f"expected '<id> <score>', got {len(parts)} fields", str(path), lineno)
        uid, tok = parts
        try:
            val = float(tok)
        except ValueError:
            raise ScoreFileError(f"bad score {tok!r}", str(path), lineno) from None
        if not math.isfinite(val):
            raise ScoreFileError(f"non-finite score {tok!r} for {uid!r}", str(path), lineno)
        if uid in out:
            raise ScoreFileError(f"duplicate score for {uid!r}", str(path), lineno)
        out[uid] = val
    return out


def bind_scores(manifest: Manifest, score_path: str | os.PathLike, strict: bool = True) -> ScoreSet:
    """Attach the scores in ``score_path`` to manifest labels.

    Score-file ids absent from the manifest are counted in ``n_extra`` and
    logged, not rejected. In strict mode a manifest id without a score is
    an error; otherwise it is dropped.
    """
    raw = read_score_file(score_path)
    missing = [r.id for r in manifest.records if r.id not in raw]
    if missing and strict:
        more = f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""
        raise ScoreFileError(f"missing score for manifest id {missing[0]!r}{more}", str(score_path))
    known = set(manifest.ids)
    n_extra = sum(1 for k in raw if k not in known)
    if n_extra:
        log.warning("%s: %d score id(s) not in manifest %r", score_path, n_extra, manifest.domain_tag)
    recs = [r for r in manifest.records if r.id in raw]
    return ScoreSet(
        tuple(r.id for r in recs),
        np.array([raw[r.id] for r in recs], dtype=np.float64),
        np.array([r.label is Label.BONAFIDE for r in recs], dtype=bool),
        n_extra=n_extra,
    )


def write_score_file(scores: ScoreSet, path: str | os.PathLike) -> None:
    lines = [f"{i} {float(s)!r}\n" for i, s in zip(scores.ids, scores.scores)]
    Path(path).write_text("".join(lines), encoding="utf-8")
