import pytest
from hypothesis import HealthCheck, settings

from kernelblaze.knowledge_base import KnowledgeBase, OptimizationEntry, PerformanceState, frozen_time

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def frozen():
    with frozen_time() as ts:
        yield ts


@pytest.fixture
def small_kb(frozen):
    kb = KnowledgeBase(hardware_tag="A6000")
    kb.add_state(PerformanceState("dram_bandwidth_bound", "dram_bandwidth_bound", "dram_bandwidth_bound"))
    kb.add_optimization("dram_bandwidth_bound", OptimizationEntry("shared_memory_tiling", "shared_memory_tiling", predicted_gain=1.5))
    kb.add_optimization("dram_bandwidth_bound", OptimizationEntry("memory_coalescing", "memory_coalescing", predicted_gain=1.2))
    return kb


def hand_task(effects, *, base=1000, baseline=None):
    """A generated task's hidden states with a hand-written effect table.

    ``effects`` maps (state, opt) to Effect; states are h0..h3 of seed 1.
    """
    from dataclasses import replace

    from kernelblaze.simenv import make_synthetic_task

    t = make_synthetic_task(1)
    opts = sorted({op for _, op in effects})
    return replace(
        t,
        task_id="hand",
        base_cycles=base,
        baseline_cycles=baseline or base,
        effect_table=dict(effects),
        start_state="h0",
        opts=opts,
        planted_chain=[],
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
