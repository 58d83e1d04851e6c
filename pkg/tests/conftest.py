"""Session-cached scenario runs shared by the scenario and acceptance tests."""
import pytest

from mcflab.scenarios import builtin_config, run_scenario

_RUNS = {}
ACCEPTANCE_LINES = []


def scenario_run(name, tmp_factory):
    if name not in _RUNS:
        out = tmp_factory.mktemp(name)
        rep, af = run_scenario(builtin_config(name), output=str(out))
        _RUNS[name] = (rep, af, out)
    return _RUNS[name]


@pytest.fixture(scope="session")
def run_of(tmp_path_factory):
    """``run_of(name) -> (report, arrival field, output dir)``, each builtin run at most once."""
    return lambda name: scenario_run(name, tmp_path_factory)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
