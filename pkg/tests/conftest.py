"""Shared fixtures and the acceptance-criterion summary hook."""

from __future__ import annotations

import numpy as np
import pytest

from nsk.dataio import EegRecording
from nsk.preprocess import Epoch

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _CRITERIA[n] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {status}: {title}"
        terminalreporter.write_line(f"{line} [{detail}]" if detail else line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def make_recording():
    """Factory for small random recordings."""

    def _make(n_samples=256, n_channels=4, fs_hz=128.0, subject_id="s001", label="healthy",
              seed=0, scale=10.0):
        x = np.random.default_rng(seed).standard_normal((n_samples, n_channels)) * scale
        return EegRecording(subject_id, label, fs_hz, x)

    return _make


@pytest.fixture
def make_epoch():
    def _make(samples, fs_hz=128.0):
        return Epoch("s001", 0, fs_hz, np.asarray(samples, dtype=float))

    return _make


def separable_dataset(seed: int, n: int = 200, d: int = 10, margin: float = 1.0):
    """Unit-variance Gaussian points at least ``margin`` from a random hyperplane."""
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    X = rng.standard_normal((8 * n, d))
    X = X[np.abs(X @ w) >= margin][:n]
    return X, (X @ w > 0).astype(np.int64)


@pytest.fixture
def separable():
    return separable_dataset
