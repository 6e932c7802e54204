import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("utda", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("utda")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TINY = ["train.epochs=1", "train.batch_size=16",
        "na.nx=20", "na.ny=8", "na.L=2", "na.K=2", "na.n_per_domain=40", "na.hidden=4",
        "gain.nx=20", "gain.ny=8", "gain.L=2", "gain.K=2", "gain.n_per_domain=40",
        "gain.gen_n_per_domain=10", "gain.gen_pt_n_per_domain=20",
        "pr.nx=30", "pr.ny=40", "pr.nyc=15", "pr.L=1,2,3", "pr.K=2", "pr.n_per_domain=30",
        "pr.epochs=1", "pr.estimator_epochs=1",
        "mnist.m=50", "mnist.K=2", "mnist.n_train=50", "mnist.n_test=25", "mnist.hidden_ddtda=8",
        "mnist.epochs=1"]


def write_idx_images(path, n, seed=0):
    pixels = np.random.default_rng(seed).integers(0, 256, n * 784, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(np.array([2051, n, 28, 28], dtype=">u4").tobytes() + pixels.tobytes())


@pytest.fixture
def tiny(tmp_path):
    """Overrides that shrink every recipe to a sub-second run, with fake MNIST files."""
    write_idx_images(tmp_path / "train.idx", 60)
    write_idx_images(tmp_path / "test.idx", 30, seed=1)
    return TINY + [f"mnist.images={tmp_path / 'train.idx'}",
                   f"mnist.test_images={tmp_path / 'test.idx'}"]


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(label, ok, detail, skipped=False):
        status = "SKIP" if skipped else ("PASS" if ok else "FAIL")
        lines.append(f"{label}: {status}  {detail}")
        if skipped:
            pytest.skip(detail)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=_criterion_order):
            terminalreporter.write_line(line)


def _criterion_order(line):
    head = line.split(":")[0].split()
    return int(head[-1]) if head[-1].isdigit() else 99
