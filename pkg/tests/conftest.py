import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_addoption(parser):
    parser.addoption("--dataset-stats-dir", default=None,
                     help="directory with laptop/ and rest/ split files for the dataset statistics check")


@pytest.fixture
def stats_dir(request):
    return request.config.getoption("--dataset-stats-dir")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
