import json

import pytest

from qkmar.data import SynthSpec, synth_generate, write_dataset

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "seen": False, "details": []})
    if report.when == "call":
        entry["details"] += [v for k, v in report.user_properties if k == "measured"]
    if report.when == "call" or report.outcome != "passed":
        entry["seen"] = True
        entry["ok"] = entry["ok"] and report.outcome == "passed"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("criterion")
    if m is not None:
        outcome.get_result().criterion = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}")
        for detail in entry["details"]:
            terminalreporter.write_line(f"    {detail}")


def make_dataset(root, **overrides):
    spec = SynthSpec.from_dict({"samples_per_class": 10, "seed": 1, **overrides})
    chips, labels = synth_generate(spec)
    write_dataset(root, chips, labels)
    return root


@pytest.fixture(scope="session")
def small_grd(tmp_path_factory):
    """20 real 16x16 chips, 10 per class."""
    return make_dataset(tmp_path_factory.mktemp("grd"))


def write_config(path, **fields):
    path.write_text(json.dumps(fields))
    return path
