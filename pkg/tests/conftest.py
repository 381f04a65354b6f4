import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from kfcs import harness  # noqa: E402


@pytest.fixture(scope="session")
def published_traces():
    """Both full-size published experiments (100 trials each), run once per session."""
    return {name: harness.run_experiment(harness.preset(name)) for name in harness.PRESETS}
