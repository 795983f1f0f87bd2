import numpy as np
import pytest

from cisim.audio import AudioBuffer, write_wav
from cisim import synth

ACCEPTANCE_LINES = []


def record_acceptance(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def speech():
    return synth.speech_like(7, duration=2.5)


def sine(freq, duration=1.0, fs=16000, amp=1.0, phase=0.0):
    t = np.arange(int(round(duration * fs))) / fs
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t + phase), fs)


@pytest.fixture
def small_corpus(tmp_path):
    """Two utterances and one babble noise on disk, with a manifest."""
    rows = ["kind,id,path"]
    for i in range(2):
        write_wav(synth.speech_like(100 + i, duration=1.6), tmp_path / f"utt{i}.wav")
        rows.append(f"clean,utt{i},utt{i}.wav")
    write_wav(synth.babble(5, duration=4.0), tmp_path / "babble.wav")
    rows.append("noise,babble,babble.wav")
    (tmp_path / "manifest.csv").write_text("\n".join(rows) + "\n")
    return tmp_path
