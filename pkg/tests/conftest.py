import pytest

from tdomt.experiment import ExperimentConfig


def tiny_config(**overrides):
    """A seconds-scale experiment: small corpus, one layer per side, d=16."""
    base = {
        "corpus.train_per_direction": 40,
        "corpus.valid_per_direction": 4,
        "corpus.test_per_direction": 4,
        "corpus.parallel_size": 24,
        "model.num_layers": 1,
        "model.stage1_layers": 1,
        "model.d_model": 16,
        "model.heads": 2,
        "training.steps": 4,
        "training.max_tokens": 256,
        "evaluation.beam": 2,
        "evaluation.analysis_set_size": 24,
    }
    base.update(overrides)
    return ExperimentConfig().replace(**base)


@pytest.fixture()
def tiny():
    return tiny_config


# ---------------------------------------------------------------- acceptance summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.fixture()
def criterion_detail(request):
    """Tests append human-readable measurements shown in the acceptance summary."""
    lines = []
    request.node.criterion_detail = lines
    return lines


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(getattr(item, "criterion_detail", []))
    _CRITERIA[number] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number} [{title}]: {status}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
