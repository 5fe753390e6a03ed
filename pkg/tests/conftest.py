import numpy as np
import pytest

from geochemad.geodata import ElementDescriptor, Sample, Survey


def make_survey(values, positions=None, symbols=None, units=None, missing=None) -> Survey:
    values = np.asarray(values, dtype=float)
    n, c = values.shape
    symbols = symbols or [f"E{j}" for j in range(c)]
    units = units or ["ppm"] * c
    if positions is None:
        positions = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    missing = np.zeros((n, c), bool) if missing is None else np.asarray(missing, bool)
    samples = [
        Sample(f"S{i}", "soil", (float(positions[i][0]), float(positions[i][1])),
               tuple(values[i].tolist()), tuple(missing[i].tolist()))
        for i in range(n)
    ]
    return Survey(samples, [ElementDescriptor(s, u) for s, u in zip(symbols, units)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance summary
# Tests named ``test_criterion_<n>_...`` get one pass/fail line each at the end of the run.

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    name = item.name
    if not name.startswith("test_criterion_"):
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        n = int(name.split("_")[2])
        detail = dict(item.user_properties).get("detail", "")
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA[n] = (status, item.obj.__doc__.strip().splitlines()[0] if item.obj.__doc__ else name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        line = f"criterion {n}: {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
