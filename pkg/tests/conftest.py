import random

import pytest

from forgesim.backends import Backends, BackendKind, CognitionResponse, make_stub
from forgesim.profiles import ForgeryRecord

FFPP_METHODS = ("Deepfakes", "Face2Face", "FaceSwap", "NeuralTextures", "FaceShifter")


class FixedCognition:
    """Cognition backend that always answers with the same text and records requests."""

    kind = BackendKind.COGNITION

    def __init__(self, text="Fixed style text.", score=None):
        self.text = text
        self.score = score
        self.requests = []

    def call(self, request):
        self.requests.append(request)
        return CognitionResponse(self.text, self.score)


class Recording:
    """Wraps a backend and records every request."""

    def __init__(self, inner):
        self.inner = inner
        self.kind = inner.kind
        self.requests = []

    def call(self, request):
        self.requests.append(request)
        return self.inner.call(request)


def random_table(n, n_creators, n_targets, seed=0):
    rng = random.Random(seed)
    return [
        ForgeryRecord(
            f"rec{i:06d}",
            f"creator{rng.randrange(n_creators):03d}",
            rng.choice(FFPP_METHODS),
            f"target{rng.randrange(n_targets):04d}",
        )
        for i in range(n)
    ]


@pytest.fixture
def toy_table():
    # c1 -> X, X, Y ; c2 -> X
    return [
        ForgeryRecord("r1", "c1", "A", "X"),
        ForgeryRecord("r2", "c1", "B", "X"),
        ForgeryRecord("r3", "c1", "A", "Y"),
        ForgeryRecord("r4", "c2", "A", "X"),
    ]


@pytest.fixture
def stubs():
    return Backends.stubs(11)


@pytest.fixture
def cognition():
    return make_stub(BackendKind.COGNITION, 11)


def make_run_config(root, *, n_real=10, n_forged=20, n_creators=6, **overrides):
    """Write a toy metadata table under ``root`` and return a config that uses it."""
    from forgesim.pipeline import RunConfig
    from forgesim.profiles import write_metadata

    root.mkdir(parents=True, exist_ok=True)
    meta = root / "metadata.csv"
    if not meta.exists():
        write_metadata(meta, random_table(120, n_creators, 25, seed=1))
    kw = dict(seed=7, metadata=str(meta), n_real=n_real, n_forged=n_forged, output_dir=str(root / "run"))
    kw.update(overrides)
    return RunConfig(**kw)


@pytest.fixture
def run_config(tmp_path):
    return lambda **kw: make_run_config(tmp_path, **kw)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
