import re

import numpy as np
import pytest

from siphon.keyspace import Dataset, generate_uniform

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_criteria: dict[int, dict] = {}


@pytest.fixture
def trio():
    """The three-key example trie: BLACK, BLOND, BLUE."""
    return Dataset.from_keys([b"BLUE", b"BLACK", b"BLOND"])


@pytest.fixture(scope="session")
def small32():
    return generate_uniform(1 << 12, 32, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.match(item.name)
    if not m:
        return
    entry = _criteria.setdefault(int(m.group(1)), {
        "doc": (item.function.__doc__ or "").strip().splitlines()[0],
        "failed": False, "ran": False, "seconds": 0.0})
    if rep.when == "call":
        entry["ran"] = True
        entry["seconds"] += rep.duration
    if rep.failed:
        entry["failed"] = True
        crash = getattr(rep.longrepr, "reprcrash", None)
        text = crash.message if crash else rep.longreprtext.strip()
        entry["reason"] = text.splitlines()[0][:160]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for num in sorted(_criteria):
        e = _criteria[num]
        status = "FAIL" if e["failed"] else ("PASS" if e["ran"] else "SKIP")
        tr.write_line(f"criterion {num:2d}: {status}  ({e['seconds']:.1f}s)  {e['doc']}")
        if e["failed"]:
            tr.write_line(f"               {e['reason']}")
