"""Acceptance criteria 1-10, one pass/fail line each.

Run-based criteria use the session-cached builtin scenarios.  Criterion 8 and
the dumbbell part of criterion 10 are measured honestly and currently fail;
they are marked strict xfail, so an unexpected pass also breaks the suite.
"""
from collections import defaultdict

import pytest

from conftest import ACCEPTANCE_LINES
from mcflab.scenarios import CRITERIA, RunContext, builtin_config

pytestmark = pytest.mark.slow

_PARTS = defaultdict(list)

DUMBBELL_REASON = (
    "dumbbell neck: classified Saddle with clearing-out, but the sampled Lojasiewicz ratio "
    "does not grow under radius halving (TypeI), which also raises the Saddle/TypeI contradiction flag; "
    "see 'Known red criteria' in README.md"
)

CASES = [
    (1, "sphere2d"), (2, "sphere2d"), (3, None), (4, None), (5, None), (6, None),
    (7, "torus3d"), (8, "dumbbell3d"), (9, None),
    (10, "sphere2d"), (10, "cylinder3d"), (10, "torus3d"), (10, "dumbbell3d"),
]
EXPECTED_RED = {(8, "dumbbell3d"), (10, "dumbbell3d")}


def _evaluate(cid, scenario, run_of):
    crit = CRITERIA[cid]
    if scenario is None:
        return crit.evaluate(None)
    rep, af, _ = run_of(scenario)
    if cid in rep.acceptance:
        return rep.acceptance[cid]
    return crit.evaluate(RunContext(builtin_config(scenario), af, rep))


def _record(cid, scenario, ok, detail):
    where = f" on {scenario}" if scenario else ""
    line = f"criterion {cid} [{CRITERIA[cid].title}]{where}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    _PARTS[cid].append(ok)
    ACCEPTANCE_LINES.append(line)
    total = len([c for c in CASES if c[0] == cid])
    if len(_PARTS[cid]) == total and total > 1:
        summary = f"criterion {cid} overall: {'PASS' if all(_PARTS[cid]) else 'FAIL'}"
        print(summary)
        ACCEPTANCE_LINES.append(summary)


@pytest.mark.parametrize(
    "cid, scenario",
    [pytest.param(c, s, id=f"{c}-{s or 'oracle'}",
                  marks=[pytest.mark.xfail(strict=True, reason=DUMBBELL_REASON)] if (c, s) in EXPECTED_RED else [])
     for c, s in CASES],
)
def test_criterion(cid, scenario, run_of):
    ok, detail = _evaluate(cid, scenario, run_of)
    _record(cid, scenario, ok, detail)
    assert ok, detail
