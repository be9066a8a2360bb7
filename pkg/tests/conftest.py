import threading

import numpy as np
import pytest

from amrnet import _kernels
from amrnet.trees import boosting

# Every boosted model built during the session, with the training matrix it
# was fit on (None for hand-built models), for the suite-wide local-accuracy
# check in test_acceptance.py.
FITTED_GBT_MODELS = []

_pending = threading.local()
_orig_check_xy = boosting._check_xy
_orig_init = boosting.GbtModel.__init__


def _recording_check_xy(X, y):
    X, y = _orig_check_xy(X, y)
    _pending.X = X
    return X, y


def _recording_init(self, *args, **kwargs):
    _orig_init(self, *args, **kwargs)
    FITTED_GBT_MODELS.append((self, getattr(_pending, "X", None)))
    _pending.X = None


boosting._check_xy = _recording_check_xy
boosting.GbtModel.__init__ = _recording_init

CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion this test decides")


def pytest_collection_modifyitems(config, items):
    # acceptance criteria run last so the suite-wide checks see every model
    items.sort(key=lambda item: item.get_closest_marker("criterion") is not None)


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    n, title = marker
    if report.when == "call" or report.outcome != "passed":
        if report.skipped:
            CRITERIA[n] = (title, "SKIP")
        elif report.failed:
            CRITERIA[n] = (title, "FAIL")
        elif report.when == "call":
            CRITERIA[n] = (title, "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result()._criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, status = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["compiled", "fallback"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    mod = _kernels.compiled if request.param == "compiled" else _kernels.fallback
    if mod is None:
        pytest.skip("compiled extension not built")
    for name in ("embed_conv_forward", "embed_conv_backward", "gh_histogram",
                 "class_histogram", "tree_shap_batch"):
        monkeypatch.setattr(_kernels, name, getattr(mod, name))
    return request.param
