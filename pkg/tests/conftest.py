import pytest

from collabhar import data_path
from collabhar.scenario import load_script
from collabhar.simfield import SimConfig, synth_session
from helpers import make_session

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log(request):
    """Record one PASS/FAIL line for the terminal summary."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(number: int, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def demo_sessions():
    script = load_script(data_path("demo_script.toml"))
    return synth_session(script, SimConfig.load(data_path("sim_default.toml")))


@pytest.fixture
def tiny_session():
    return make_session()

