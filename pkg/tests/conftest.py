import sys
import wave
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

# filled by test_acceptance, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def write_pcm(path, samples, rate=16000):
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(np.asarray(samples, dtype="<i2").tobytes())


def speech_like(rng, rate=16000, seconds=None):
    """Silence, a few amplitude-modulated noise bursts, silence."""
    seconds = seconds if seconds is not None else rng.uniform(0.4, 1.5)
    n = int(seconds * rate)
    lead, tail = rng.integers(0, n // 4, size=2)
    body = n - lead - tail
    env = np.abs(np.sin(np.linspace(0, rng.uniform(2, 12), body)))
    core = env * rng.normal(0, rng.uniform(2000, 9000), body)
    x = np.concatenate([rng.normal(0, 3, lead), core, rng.normal(0, 3, tail)])
    return np.clip(np.round(x), -32768, 32767).astype(np.int16)


@pytest.fixture
def wav_manifest(tmp_path):
    """Three speech-like WAV files and a manifest pointing at them."""
    rng = np.random.default_rng(11)
    audio = tmp_path / "audio"
    audio.mkdir()
    lines = []
    for i, lab in enumerate(["bonafide", "spoof", "bonafide"]):
        write_pcm(audio / f"utt{i}.wav", speech_like(rng, seconds=1.0 + 0.3 * i))
        lines.append(f"utt{i}\taudio/utt{i}.wav\t{lab}\n")
    m = tmp_path / "clips.tsv"
    m.write_text("".join(lines))
    return m
