import math
import random
import statistics
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from kernelblaze.agents import AgentResponse
from kernelblaze.errors import EmptyResults, UnsortedThresholds
from kernelblaze.icrl import ACCEPTED, REJECTED, RolloutStep, Trajectory
from kernelblaze.metrics import (
    STATS_NOTE,
    SummaryRow,
    TaskResult,
    curve_csv,
    curve_svg,
    fast_p,
    fast_p_curve,
    summarize,
    summary_csv,
    table_row,
    token_accounting,
    usage_report,
)

PUBLISHED = Path(__file__).resolve().parents[1] / "paper.md"


def R(speedup, valid=True, backend_error=False):
    return TaskResult("t", valid, speedup, backend_error=backend_error)


def test_fast_p_examples():
    assert fast_p([R(2.0), R(0.5), R(3.0, valid=False)], 1.0) == pytest.approx(1 / 3)
    assert fast_p([R(1.0), R(1.0)], 1.0) == 0.0
    assert fast_p([R(2.0), R(9.0, backend_error=True)], 1.0) == 1.0
    with pytest.raises(EmptyResults):
        fast_p([R(2.0, backend_error=True)], 1.0)


def test_curve_examples():
    assert fast_p_curve([R(2.0)], [1, 2, 3]) == [(1.0, 1.0), (2.0, 0.0), (3.0, 0.0)]
    with pytest.raises(UnsortedThresholds):
        fast_p_curve([R(2.0)], [])
    with pytest.raises(UnsortedThresholds):
        fast_p_curve([R(2.0)], [2, 1])


def _random_results(rng, n):
    return [
        TaskResult(f"t{i}", rng.random() < 0.8, rng.choice([1.0, rng.lognormvariate(0, 1)]), backend_error=rng.random() < 0.05)
        for i in range(n)
    ]


def test_fast_p_and_curve_match_counting_oracle():
    rng = random.Random(3)
    for _ in range(200):
        res = _random_results(rng, rng.randint(1, 40))
        rows = [r for r in res if not r.backend_error]
        if not rows:
            continue
        ps = sorted(rng.uniform(0, 4) for _ in range(5))
        for p, frac in fast_p_curve(res, ps):
            count = 0
            for r in rows:
                if r.valid and r.speedup > p:
                    count += 1
            assert frac == count / len(rows)


def test_summary_examples():
    s = summarize([R(2.0), R(8.0)])
    assert (s.geomean, s.median, s.pct_gt_1, s.valid_rate) == (pytest.approx(4.0), 5.0, 1.0, 1.0)
    ties = summarize([R(1.0), R(0.5), R(2.0), R(7.0, valid=False)])
    assert (ties.pct_gt_1, ties.pct_lt_1, ties.valid_rate) == (pytest.approx(1 / 3), pytest.approx(1 / 3), 0.75)
    none_valid = summarize([R(3.0, valid=False)])
    assert none_valid.valid_rate == 0.0 and math.isnan(none_valid.mean)


def test_summary_matches_second_implementation():
    rng = random.Random(17)
    for _ in range(100):
        res = _random_results(rng, rng.randint(1, 60))
        rows = [r for r in res if not r.backend_error]
        if not rows:
            continue
        s = summarize(res)
        v = sorted(r.speedup for r in rows if r.valid)
        assert s.valid_rate == len(v) / len(rows)
        if not v:
            continue
        n = len(v)
        med = v[n // 2] if n % 2 else (v[n // 2 - 1] + v[n // 2]) / 2
        logs = 0.0
        for x in v:
            logs += math.log(x)
        assert s.mean == pytest.approx(sum(v) / n, rel=1e-12)
        assert s.geomean == pytest.approx(math.exp(logs / n), rel=1e-12)
        assert s.median == pytest.approx(med, rel=1e-12)
        assert (s.min, s.max) == (v[0], v[-1])
        assert s.pct_gt_1 == len([x for x in v if x > 1]) / n
        assert s.pct_lt_1 == len([x for x in v if x < 1]) / n


results_st = st.lists(
    st.builds(TaskResult, st.just("t"), st.booleans(), st.floats(0.01, 500), st.just(0), st.just(0), st.booleans()),
    min_size=1,
    max_size=30,
).filter(lambda rs: any(not r.backend_error for r in rs))


@given(results_st, st.lists(st.floats(0, 10), min_size=2, max_size=8))
def test_fast_p_non_increasing(results, ps):
    fracs = [f for _, f in fast_p_curve(results, sorted(ps))]
    assert all(b <= a for a, b in zip(fracs, fracs[1:]))


@given(results_st)
def test_fast_p_zero_is_valid_rate(results):
    assert fast_p(results, 0) == summarize(results).valid_rate


@given(results_st)
def test_am_gm(results):
    s = summarize(results)
    if not math.isnan(s.mean):
        assert s.geomean <= s.mean * (1 + 1e-12)


def _published_level2_row() -> str:
    lines = PUBLISHED.read_text(encoding="utf-8").splitlines()
    start = next(i for i, l in enumerate(lines) if "Level 2" in l and "multicolumn" in l)
    return next(l for l in lines[start:] if l.startswith("Ours"))


def test_table_row_layout_matches_published_row():
    row = SummaryRow(0.95, 9.419, 2.214, 2.074, 0.0488, 362.29, 0.7260, 0.2740)
    ours = table_row("Ours", row)
    published = _published_level2_row()
    cells = lambda s: [c.strip() for c in s.rstrip().removesuffix("\\\\").split("&")]
    assert cells(ours) == cells(published)
    assert ours == r"Ours & 95\% & 9.419 & 2.214 & 2.074 & 0.0488 & 362.29 & 72.60\% & 27.40\% \\"


def _ev(role, i, o):
    return AgentResponse("x", i, o, role_id=role)


def test_token_accounting():
    assert token_accounting([]) == {"total_in": 0, "total_out": 0, "per_role": {}}
    got = token_accounting([_ev("lowering", 10, 5), _ev("soft_verifier", 7, 3)])
    assert (got["total_in"], got["total_out"]) == (17, 8)
    assert got["per_role"]["lowering"] == {"in": 10, "out": 5}


def _s(opt, reward, outcome=ACCEPTED, state="s"):
    return RolloutStep(0, state, "balanced", None, "v", opt, 1.5, "w", reward if outcome == ACCEPTED else 0.0, outcome)


def test_usage_examples():
    rep = usage_report([Trajectory("t", 0, seed=0, steps=[_s("A", 1.5), _s("B", 2.0)])])
    assert rep["transition_stats"] == {("A", "B"): {"count": 1, "median_gain": 2.0}}
    assert rep["per_optimization"]["A"] == {"attempts": 1, "successes": 1}
    broken = usage_report([Trajectory("t", 0, seed=0, steps=[_s("A", 1.5), _s("C", 0, REJECTED), _s("B", 2.0)])])
    assert ("A", "B") not in broken["transition_stats"]
    flat = usage_report([Trajectory("t", 0, seed=0, steps=[_s("A", 1.005)])])
    assert flat["per_optimization"]["A"]["successes"] == 0


def test_usage_matches_pair_enumeration():
    rng = random.Random(5)
    trajs = []
    for i in range(40):
        steps = [_s(rng.choice("ABCD"), rng.uniform(0.8, 2.5), rng.choice([ACCEPTED, ACCEPTED, REJECTED]), rng.choice("xy")) for _ in range(rng.randint(0, 8))]
        trajs.append(Trajectory("t", i, seed=0, steps=steps))
    rep = usage_report(trajs)
    pairs = {}
    for t in trajs:
        for a, b in zip(t.steps, t.steps[1:]):
            if a.outcome == b.outcome == ACCEPTED:
                pairs.setdefault((a.opt_id, b.opt_id), []).append(b.reward)
    assert {k: v["count"] for k, v in rep["transition_stats"].items()} == {k: len(v) for k, v in pairs.items()}
    for k, v in pairs.items():
        assert rep["transition_stats"][k]["median_gain"] == statistics.median(v)
    assert sum(d["attempts"] for d in rep["per_optimization"].values()) == sum(len(t.steps) for t in trajs)
    assert sum(rep["per_state"].values()) == sum(len(t.steps) for t in trajs)


def test_emitters_are_byte_stable():
    curve = fast_p_curve([R(2.0), R(0.7), R(1.4)], [0.0, 0.5, 1.0, 1.5, 2.0])
    assert curve_csv(curve) == curve_csv(list(curve))
    assert curve_csv(curve).splitlines()[0] == "p,fraction"
    svg = curve_svg(curve)
    assert svg == curve_svg(curve) and svg.startswith("<svg") and svg.count("<circle") == 5
    text = summary_csv([("Ours", summarize([R(2.0), R(0.5)]))])
    assert text.startswith(f"# {STATS_NOTE}\n") and text == summary_csv([("Ours", summarize([R(2.0), R(0.5)]))])
