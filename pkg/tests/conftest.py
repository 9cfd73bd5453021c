"""Collects per-criterion outcomes from tests marked ``criterion`` and prints a verdict line each."""

from collections import OrderedDict

_outcomes: "OrderedDict[str, dict]" = OrderedDict()


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            cid, title = mark.args
            _outcomes.setdefault(cid, {"title": title, "failed": [], "ran": 0})


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = _outcomes[mark.args[0]]
    if call.when == "call":
        entry["ran"] += 1
    if call.excinfo is not None:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for cid, entry in sorted(_outcomes.items(), key=lambda kv: int(kv[0][1:])):
        if entry["failed"]:
            verdict = "FAIL"
            detail = " (failed: " + ", ".join(sorted(set(entry["failed"]))) + ")"
        elif entry["ran"] == 0:
            verdict, detail = "FAIL", " (not run)"
        else:
            verdict, detail = "PASS", ""
        terminalreporter.write_line(f"ACCEPTANCE {cid} {verdict}: {entry['title']}{detail}")
