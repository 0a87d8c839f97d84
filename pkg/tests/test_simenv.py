import pytest
from conftest import hand_task
from hypothesis import given, settings, strategies as st

from kernelblaze.errors import DepthTooLarge, InvalidSpec, UnknownVariant
from kernelblaze.harness import Status
from kernelblaze.profile import total_elapsed_cycles
from kernelblaze.simenv import (
    Effect,
    SyntheticTask,
    apply_optimization,
    enumerate_all_sequences,
    make_synthetic_task,
    optimal_speedup,
    start_variant,
)
from kernelblaze.state_engine import classify_bottleneck
from kernelblaze.simenv import emit_profile


def brute_force(task, depth):
    """Recursive enumeration straight off the effect table."""

    def walk(state, remaining):
        best = 1.0
        if remaining == 0:
            return best
        for opt in task.opts:
            eff = task.effect_table.get((state, opt))
            if eff is None or eff.failure_mode != "none":
                best = min(best, walk(state, remaining - 1))
            else:
                best = min(best, eff.cycle_factor * walk(eff.next_state, remaining - 1))
        return best

    return walk(task.start_state, depth)


def test_generation_is_deterministic():
    spec = {"n_states": 5, "n_opts": 7, "depth_of_best_chain": 3}
    assert make_synthetic_task(7, spec).dumps() == make_synthetic_task(7, spec).dumps()
    assert make_synthetic_task(7).dumps() != make_synthetic_task(8).dumps()


@pytest.mark.parametrize("spec", [{"n_states": 1}, {"n_opts": 1}, {"depth_of_best_chain": 0}, {"n_states": 2, "depth_of_best_chain": 2}])
def test_invalid_specs(spec):
    with pytest.raises(InvalidSpec):
        make_synthetic_task(0, spec)


@pytest.mark.parametrize("depth", [2, 3])
@pytest.mark.parametrize("seed", range(6))
def test_planted_chain_beats_single_steps(seed, depth):
    task = make_synthetic_task(seed, {"depth_of_best_chain": depth})
    chain = 1.0
    state = task.start_state
    for opt in task.planted_chain:
        eff = task.effect_table[(state, opt)]
        chain, state = chain * eff.cycle_factor, eff.next_state
    singles = [brute_force(SyntheticTask(**{**task.__dict__, "opts": [o]}), 1) for o in task.opts]
    assert all(chain < s for s in singles)
    assert chain == pytest.approx(brute_force(task, depth), rel=1e-12)
    assert chain < brute_force(task, depth - 1)


@pytest.mark.parametrize("seed", range(6))
def test_generation_guarantees(seed):
    task = make_synthetic_task(seed)
    effects = list(task.effect_table.values())
    assert any(e.cycle_factor >= 1.0 and e.failure_mode == "none" for e in effects)
    assert any(e.failure_mode != "none" for e in effects)
    names = {h.name for h in task.hidden_states}
    assert all(e.cycle_factor > 0 and e.next_state in names for e in effects)
    for h in task.hidden_states:
        sig = classify_bottleneck(emit_profile(task, h.name, task.base_cycles))
        assert sig.key == (h.primary, h.secondary)


def test_apply_examples():
    task = hand_task(
        {("h0", "half"): Effect(0.5, "h1"), ("h0", "broken"): Effect(0.5, "h1", failure_mode="verify")},
        base=1000,
    )
    v0 = start_variant(task)
    v1, out = apply_optimization(task, v0, "half")
    assert out.status is Status.PROFILED and v1.cumulative_cycles == 500
    assert v1.hidden_state == "h1" and v1.applied_ops == ("half",)
    assert total_elapsed_cycles(out.report) == 500
    same, out = apply_optimization(task, v0, "not_in_table")
    assert out.status is Status.PROFILED and same.cumulative_cycles == 1000
    kept, out = apply_optimization(task, v0, "broken")
    assert out.status is Status.VERIFY_FAILED and kept == v0
    assert v0 == start_variant(task)


def test_foreign_variant_rejected():
    a, b = make_synthetic_task(1), make_synthetic_task(2)
    with pytest.raises(UnknownVariant):
        apply_optimization(a, start_variant(b), a.opts[0])


def test_oracle_examples():
    task = hand_task({("h0", "half"): Effect(0.5, "h1")}, base=1000)
    assert optimal_speedup(task, 1)["best_speedup"] == 2.0
    assert optimal_speedup(task, 1)["best_factor_chain"] == ["half"]
    other = hand_task({("h0", "half"): Effect(0.5, "h1")}, base=1000, baseline=1500)
    assert optimal_speedup(other, 0)["best_speedup"] == 1.5
    with pytest.raises(DepthTooLarge):
        optimal_speedup(task, 9)


@pytest.mark.parametrize("seed", range(4))
def test_dp_oracle_agrees_with_enumeration(seed):
    task = make_synthetic_task(seed, {"n_states": 4, "n_opts": 6})
    for d in range(5):
        f = optimal_speedup(task, d)["best_factor"]
        assert f == pytest.approx(brute_force(task, d), rel=1e-12)
        assert f == pytest.approx(enumerate_all_sequences(task, d), rel=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from([1, 2, 3]))
def test_oracle_monotone_in_depth(seed, depth):
    task = make_synthetic_task(seed, {"n_states": 5, "n_opts": 6, "depth_of_best_chain": depth})
    speeds = [optimal_speedup(task, d)["best_speedup"] for d in range(6)]
    assert speeds == sorted(speeds)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.lists(st.integers(0, 5), max_size=6))
def test_variants_are_persistent(seed, picks):
    task = make_synthetic_task(seed)
    v = start_variant(task)
    factor = 1.0
    for i in picks:
        before = v
        snapshot = (before.variant_id, before.cumulative_cycles, before.applied_ops, before.hidden_state)
        v, out = apply_optimization(task, before, task.opts[i])
        assert snapshot == (before.variant_id, before.cumulative_cycles, before.applied_ops, before.hidden_state)
        if v is not before:
            factor *= task.effect_table.get((before.hidden_state, task.opts[i]), Effect(1.0, "")).cycle_factor
    assert abs(v.cumulative_cycles - task.base_cycles * factor) <= 1


def test_dump_round_trip(tmp_path):
    task = make_synthetic_task(5, {"n_states": 5, "depth_of_best_chain": 3})
    path = tmp_path / "t.sim.json"
    path.write_text(task.dumps())
    again = SyntheticTask.load(path)
    assert again == task and again.dumps() == task.dumps()
