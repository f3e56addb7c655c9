"""Audio degradation protocol: edge silence trim, random truncation, self-tiling.

Only mono 16-bit PCM WAV is accepted on input and produced on output.
"""

from __future__ import annotations

import hashlib
import math
import os
import wave
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AudioError
from .manifest import Manifest, UtteranceRecord, write_manifest


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        s = np.asarray(self.samples)
        if s.ndim != 1:
            raise AudioError("clip must be mono (1-D samples)")
        if s.dtype != np.int16:
            if s.size and (s.min() < -32768 or s.max() > 32767):
                raise AudioError("samples out of int16 range")
            s = s.astype(np.int16)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class TrimConfig:
    frame_ms: float = 25.0
    threshold_db: float = -40.0

    def __post_init__(self):
        if not self.frame_ms > 0:
            raise AudioError(f"frame_ms must be > 0, got {self.frame_ms}")
        if not self.threshold_db < 0:
            raise AudioError(f"threshold_db must be < 0, got {self.threshold_db}")


@dataclass(frozen=True)
class DegradeSpec:
    target_duration_s: float = 0.25
    min_duration_s: float | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.target_duration_s > 0:
            raise AudioError(f"target duration must be > 0, got {self.target_duration_s}")
        if self.min_duration_s is not None and self.min_duration_s < self.target_duration_s:
            raise AudioError("min duration must be >= target duration")


def _frame_rms(x: np.ndarray, frame_len: int) -> np.ndarray:
    n_frames = -(-x.size // frame_len)
    padded = np.zeros(n_frames * frame_len, dtype=np.float64)
    padded[: x.size] = x
    energy = np.sum(padded.reshape(n_frames, frame_len) ** 2, axis=1)
    counts = np.full(n_frames, frame_len, dtype=np.float64)
    counts[-1] = x.size - (n_frames - 1) * frame_len
    return np.sqrt(energy / counts)


def trim_silence(clip: AudioClip, cfg: TrimConfig = TrimConfig()) -> AudioClip:
    """Drop leading/trailing frames quieter than ``threshold_db`` below the loudest frame.

    Frames are non-overlapping, ``frame_ms`` long, aligned to the clip start;
    the last frame may be partial. Interior frames are never touched. If
    nothing passes the gate (all-zero input) the loudest frame is returned.
    """
    if len(clip) == 0:
        raise AudioError("cannot trim an empty clip")
    frame_len = max(1, int(round(cfg.frame_ms * clip.sample_rate / 1000.0)))
    rms = _frame_rms(clip.samples, frame_len)
    peak = rms.max()
    loud = rms >= peak * 10.0 ** (cfg.threshold_db / 20.0)
    if peak == 0.0 or not loud.any():
        k = int(np.argmax(rms))
        return AudioClip(clip.samples[k * frame_len : (k + 1) * frame_len], clip.sample_rate)
    idx = np.flatnonzero(loud)
    start = idx[0] * frame_len
    stop = min((idx[-1] + 1) * frame_len, len(clip))
    return AudioClip(clip.samples[start:stop], clip.sample_rate)


def truncate_random(clip: AudioClip, target_s: float, seed: int) -> AudioClip:
    """Uniformly placed contiguous segment of ``round(target_s * sr)`` samples."""
    if not target_s > 0:
        raise AudioError(f"target duration must be > 0, got {target_s}")
    n_out = int(round(target_s * clip.sample_rate))
    if len(clip) <= n_out:
        return clip
    offset = int(np.random.default_rng(np.uint64(seed)).integers(0, len(clip) - n_out + 1))
    return AudioClip(clip.samples[offset : offset + n_out], clip.sample_rate)


def tile_to_min(clip: AudioClip, min_s: float) -> AudioClip:
    """Repeat the clip end to end and cut at ``ceil(min_s * sr)`` samples."""
    if len(clip) == 0:
        raise AudioError("cannot tile an empty clip")
    if not min_s > 0:
        raise AudioError(f"minimum duration must be > 0, got {min_s}")
    # tolerance absorbs float noise such as 0.3 * 16000 = 4800.000000000001
    n_out = math.ceil(min_s * clip.sample_rate - 1e-9)
    if len(clip) >= n_out:
        return clip
    reps = -(-n_out // len(clip))
    return AudioClip(np.tile(clip.samples, reps)[:n_out], clip.sample_rate)


# --------------------------------------------------------------------------
# WAV I/O


def read_wav(path: str | os.PathLike) -> AudioClip:
    try:
        with wave.open(str(path), "rb") as w:
            if w.getcomptype() != "NONE":
                raise AudioError(f"{path}: compressed WAV not supported")
            if w.getnchannels() != 1:
                raise AudioError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise AudioError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            rate = w.getframerate()
            data = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioError(f"{path}: not a PCM WAV file ({exc})") from None
    except OSError as exc:
        raise AudioError(f"{path}: {exc.strerror or exc}") from None
    return AudioClip(np.frombuffer(data, dtype="<i2").astype(np.int16), rate)


def write_wav(clip: AudioClip, path: str | os.PathLike) -> None:
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(clip.sample_rate)
        w.writeframes(clip.samples.astype("<i2").tobytes())


# --------------------------------------------------------------------------
# batch pipeline


def record_seed(global_seed: int, record_id: str) -> int:
    """64-bit seed derived from (global seed, id); independent of processing order."""
    h = hashlib.blake2b(f"{int(global_seed)}\x1f{record_id}".encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def degrade_clip(clip: AudioClip, spec: DegradeSpec, trim: TrimConfig, seed: int) -> AudioClip:
    out = trim_silence(clip, trim)
    out = truncate_random(out, spec.target_duration_s, seed)
    if spec.min_duration_s is not None:
        out = tile_to_min(out, spec.min_duration_s)
    return out


def _degrade_one(rec: UtteranceRecord, spec: DegradeSpec, trim: TrimConfig, out_dir: Path) -> Path:
    if rec.path is None:
        raise AudioError("record has no audio path", rec.id)
    if "/" in rec.id or "\\" in rec.id or rec.id in (".", ".."):
        raise AudioError("id cannot be used as a file name", rec.id)
    try:
        clip = read_wav(rec.path)
        if len(clip) == 0:
            raise AudioError(f"{rec.path}: empty audio")
        out = degrade_clip(clip, spec, trim, record_seed(spec.seed, rec.id))
    except AudioError as exc:
        raise AudioError(str(exc), rec.id) from None
    dest = out_dir / f"{rec.id}.wav"
    try:
        write_wav(out, dest)
    except OSError as exc:
        raise AudioError(f"cannot write {dest}: {exc.strerror or exc}", rec.id) from None
    return dest


def degrade_set(
    manifest: Manifest,
    spec: DegradeSpec,
    trim: TrimConfig = TrimConfig(),
    out_dir: str | os.PathLike = "degraded",
    workers: int = 1,
) -> Manifest:
    """Trim, truncate and optionally tile every record; write ``<id>.wav`` files.

    The returned manifest (domain tag suffixed ``-degraded``) is also written
    to ``out_dir/manifest.tsv``.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise AudioError(f"cannot create {out_dir}: {exc.strerror or exc}") from None
    recs = manifest.records
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(lambda r: _degrade_one(r, spec, trim, out_dir), recs))
    else:
        paths = [_degrade_one(r, spec, trim, out_dir) for r in recs]
    tag = manifest.domain_tag + "-degraded"
    new = Manifest(tuple(UtteranceRecord(r.id, p, r.label, tag) for r, p in zip(recs, paths)), tag)
    write_manifest(new, out_dir / "manifest.tsv")
    return new
