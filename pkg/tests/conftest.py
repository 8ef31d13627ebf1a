import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("repo")

ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance(request):
    """Recorder for acceptance-criterion outcomes, summarized at the end of the run."""
    store = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number: int, passed: bool, detail: str = ""):
        store[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(store):
        passed, detail = store[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_dataset():
    from seismoaug.datagen import GeneratorConfig, generate_dataset

    return generate_dataset(6, GeneratorConfig().scaled_to(32, 32), seed=3)
