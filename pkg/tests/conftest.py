import numpy as np
import pytest

from pelrec.synth import SceneSpec, make_sequence

ACCEPTANCE_RESULTS = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def translated_pair():
    """Noiseless 64x64 smooth texture moved by (1.0, 0.5); returns (previous, current, truth)."""
    scene = SceneSpec(width=64, height=64, velocity=(1.0, 0.5), frame_count=2, texture_seed=7)
    frames, truths = make_sequence(scene)
    return frames[0], frames[1], truths[0]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  AC{cid:<2d} {detail}")
