import os
import tempfile

import numpy as np
import pytest

# Keep the rc file, profiles and dataset cache out of the user's home.
_SANDBOX = tempfile.mkdtemp(prefix="ctxseg-tests-")
os.environ.setdefault("CTXSEG_CONFIG_FOLDER", os.path.join(_SANDBOX, "config"))
os.environ.setdefault("DATASET_CACHE_PATH", os.path.join(_SANDBOX, "datasets"))
os.environ.setdefault("PROFILE_STORAGE_PATH", os.path.join(_SANDBOX, "config", "profiles"))
os.environ.setdefault("PRETTIFY_OUTPUT", "false")
os.environ.setdefault("LOG_LEVEL", "WARNING")


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
