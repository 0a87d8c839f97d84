import numpy as np
import pytest
from conftest import hand_task
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from kernelblaze.agents import MockAgent
from kernelblaze.errors import ShapeMismatch
from kernelblaze.harness import (
    RetryBudget,
    Status,
    VerificationSpec,
    lint_variant,
    run_pipeline,
    soft_verify,
    verify_numerical,
)
from kernelblaze.profile import total_elapsed_cycles
from kernelblaze.simenv import Effect, SimBackend, make_synthetic_task, render_variant, start_variant

ONE_SEED = VerificationSpec(seeds=(0,))


def _one(c, r, **kw):
    spec = VerificationSpec(seeds=(0,), **kw)
    return verify_numerical({0: np.array(c, float)}, {0: np.array(r, float)}, spec)


def test_verify_examples():
    assert _one([1.0, 2.0], [1.0, 2.0]).passed
    assert _one([1.005], [1.0], relative_tolerance=1e-2).passed
    res = _one([1.1], [1.0])
    assert not res.passed and res.seed == 0
    assert res.max_rel_err == pytest.approx(0.1)
    with pytest.raises(ShapeMismatch):
        _one([1.0, 2.0], [1.0])


def test_verify_names_first_failing_seed():
    spec = VerificationSpec(seeds=(0, 1, 2))
    ref = {s: np.ones(4) for s in spec.seeds}
    cand = {0: np.ones(4), 1: np.ones(4), 2: np.ones(4) * 2}
    assert verify_numerical(cand, ref, spec).seed == 2


def test_spec_validation():
    with pytest.raises(ValueError):
        VerificationSpec(seeds=())
    with pytest.raises(ValueError):
        VerificationSpec(relative_tolerance=0)


def test_swapping_can_turn_a_fail_into_a_pass():
    # the pass rule scales rtol by |reference|, so swapping is not symmetric
    assert not _one([1.0], [0.5], relative_tolerance=0.5).passed
    assert _one([0.5], [1.0], relative_tolerance=0.5).passed


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite), st.floats(1e-4, 0.99), st.floats(1e-6, 1.0))
def test_large_discrepancies_fail_both_ways(a, b, rtol, atol):
    spec = VerificationSpec(seeds=(0,), relative_tolerance=rtol, absolute_tolerance=atol)
    big = np.abs(a - b) > atol + rtol * np.maximum(np.abs(a), np.abs(b))
    if big.any():
        assert not verify_numerical({0: a}, {0: b}, spec).passed
        assert not verify_numerical({0: b}, {0: a}, spec).passed
    assert verify_numerical({0: a}, {0: a}, spec).passed


# ---------------------------------------------------------------------------
# soft verification

REF = "// ops: matmul bias_add relu\n// calls:\n"


def test_lint_rules():
    assert lint_variant("// ops: matmul bias_add relu\n", REF).accepted
    assert lint_variant("// ops: relu bias_add matmul extra\n", REF).accepted
    v = lint_variant("// ops: matmul relu\n", REF)
    assert (v.accepted, v.reason) == (False, "functionality_removed") and "bias_add" in v.detail
    v = lint_variant("// ops: matmul bias_add relu\ncublasSgemm(h, ...);\n", REF)
    assert (v.accepted, v.reason) == (False, "external_library")
    # dropping one op while adding another is still a removal
    assert lint_variant("// ops: matmul relu softmax\n", REF).reason == "functionality_removed"


def test_soft_verify_uses_agent_then_falls_back():
    agent = MockAgent([{"role_id": "soft_verifier", "text": '{"verdict": "reject", "reason": "other", "detail": "looks odd"}'}])
    v = soft_verify(agent, "// ops: matmul bias_add relu\n", REF)
    assert (v.accepted, v.reason) == (False, "other")
    # script exhausted -> lint answers
    assert soft_verify(agent, "// ops: matmul bias_add relu\n", REF).accepted
    assert soft_verify(None, "// ops: matmul\n", REF).reason == "functionality_removed"


# ---------------------------------------------------------------------------
# pipeline over the simulated backend


def _patch(parent, opt):
    return f"// kernelblaze-sim patch\n// parent: {parent}\n// apply: {opt}\n"


def _setup(effects, **kw):
    task = hand_task(effects)
    backend = SimBackend([task], **kw)
    spec = backend.add_task(task)
    return task, backend, spec


def test_valid_variant_is_profiled():
    task, backend, spec = _setup({("h0", "tile"): Effect(0.5, "h1")})
    out = run_pipeline(_patch("hand:v0", "tile"), spec, backend)
    assert out.status is Status.PROFILED
    assert total_elapsed_cycles(out.report) == 500
    assert [a.stage for a in out.attempts] == ["compile", "verify", "soft_verify", "profile"]


def test_compile_broken_with_zero_budget():
    task, backend, spec = _setup({("h0", "tile"): Effect(0.5, "h1", failure_mode="compile")})
    out = run_pipeline(_patch("hand:v0", "tile"), spec, backend, retry_budget=RetryBudget(compile=0, verify=0))
    assert out.status is Status.COMPILE_FAILED and out.report is None
    assert "tile" in out.attempts[-1].feedback


def test_verify_failure_names_seed_two():
    task, backend, spec = _setup({("h0", "tile"): Effect(0.5, "h1", failure_mode="verify", fail_seeds=(2,))})
    out = run_pipeline(_patch("hand:v0", "tile"), spec, backend, retry_budget=RetryBudget(verify=0))
    assert out.status is Status.VERIFY_FAILED
    assert out.attempts[-1].stage == "verify" and out.attempts[-1].feedback.startswith("seed 2:")


def test_repairs_are_bounded_and_recorded():
    task, backend, spec = _setup({("h0", "bad"): Effect(0.5, "h1", failure_mode="compile"), ("h0", "good"): Effect(0.8, "h1")})
    calls = []

    def repair(stage, feedback, code):
        calls.append(stage)
        return _patch("hand:v0", "bad" if len(calls) < 2 else "good")

    out = run_pipeline(_patch("hand:v0", "bad"), spec, backend, repair=repair)
    assert out.status is Status.PROFILED and calls == ["compile", "compile"]
    assert total_elapsed_cycles(out.report) == 800
    calls.clear()
    out = run_pipeline(_patch("hand:v0", "bad"), spec, backend, retry_budget=RetryBudget(compile=1), repair=lambda *a: _patch("hand:v0", "bad"))
    assert out.status is Status.COMPILE_FAILED and [a.stage for a in out.attempts] == ["compile", "compile"]


def test_soft_verify_blocks_profiling():
    dropped = make_synthetic_task(1).declared_ops[0]
    task, backend, spec = _setup({("h0", "fuse"): Effect(0.5, "h1", removes_ops=(dropped,))})
    out = run_pipeline(_patch("hand:v0", "fuse"), spec, backend)
    assert out.status is Status.SOFT_VERIFY_FAILED and out.report is None
    assert "functionality_removed" in out.attempts[-1].feedback and dropped in out.attempts[-1].feedback
    task, backend, spec = _setup({("h0", "lib"): Effect(0.5, "h1", external_calls=("cublasLtMatmul",))})
    out = run_pipeline(_patch("hand:v0", "lib"), spec, backend)
    assert out.status is Status.SOFT_VERIFY_FAILED and "external_library" in out.attempts[-1].feedback


def test_backend_fault_is_distinguished():
    task, backend, spec = _setup({("h0", "tile"): Effect(0.5, "h1")}, fail_after=0)
    out = run_pipeline(_patch("hand:v0", "tile"), spec, backend)
    assert out.status is Status.BACKEND_ERROR and out.attempts[-1].stage == "backend"


def test_backend_contract():
    task, backend, spec = _setup({("h0", "tile"): Effect(0.5, "h1")})
    assert backend.baseline(spec) == task.baseline_cycles
    first = backend.profile(spec, "hand:v0")
    assert first == backend.profile(spec, "hand:v0")
    assert total_elapsed_cycles(first) == task.base_cycles
    assert backend.compile(spec, render_variant(task, start_variant(task))).variant_id == "hand:v0"
    assert not backend.compile(spec, "int main() {}").ok


def test_noise_is_off_by_default_and_seeded_when_on():
    task, _, spec = _setup({("h0", "tile"): Effect(0.5, "h1")})
    noisy = SimBackend([task], noise=0.05)
    a = total_elapsed_cycles(noisy.profile(spec, "hand:v0"))
    assert a == total_elapsed_cycles(SimBackend([task], noise=0.05).profile(spec, "hand:v0"))
    assert a != task.base_cycles and abs(a / task.base_cycles - 1) < 0.3
