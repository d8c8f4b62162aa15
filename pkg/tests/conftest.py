import numpy as np
import pytest
from hypothesis import settings

from slrgrowth.config import load_config
from slrgrowth.fixture import make_fixture, write_fixture
from slrgrowth.pipeline import load_study

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("county_fixture")
    write_fixture(out)
    return out


@pytest.fixture(scope="session")
def fixture_obj():
    return make_fixture()


@pytest.fixture(scope="session")
def battery_config(fixture_dir):
    return load_config(fixture_dir / "battery.toml")


@pytest.fixture(scope="session")
def study(battery_config):
    return load_study(battery_config.data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = []
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance"):
            lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
