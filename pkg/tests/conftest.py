import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from respforecast.config import load_config  # noqa: E402
from respforecast.synthetic import SyntheticSpec, generate  # noqa: E402


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthetic")
    generate(SyntheticSpec(), out)
    return out


@pytest.fixture(scope="session")
def synthetic_config(synthetic_dir):
    return load_config(synthetic_dir / "run.cfg").validate()


@pytest.fixture(scope="session")
def synthetic_matrices(synthetic_config):
    from respforecast.runner import build_matrices

    return build_matrices(synthetic_config)


# one line per acceptance criterion, printed after the run
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
