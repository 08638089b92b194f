import hypothesis
import pytest

hypothesis.settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
hypothesis.settings.load_profile("repo")

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    n_pass = sum(line.startswith("PASS") for line in ACCEPTANCE_LINES)
    terminalreporter.write_line(f"{n_pass}/{len(ACCEPTANCE_LINES)} criteria passed")
