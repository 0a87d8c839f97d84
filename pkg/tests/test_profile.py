import math
import random

import pytest
from hypothesis import given, strategies as st

from kernelblaze.errors import EmptyProfile, MalformedProfile
from kernelblaze.profile import (
    HEADER,
    KernelProfile,
    ProfileReport,
    aggregate_metrics,
    compute_reward,
    format_profile_report,
    parse_profile_report,
    speedup_vs_baseline,
    total_elapsed_cycles,
)

CSV_HEADER = ",".join(HEADER) + "\n"


def report(*cycles):
    return ProfileReport(tuple(KernelProfile("k", i, c) for i, c in enumerate(cycles)))


def test_two_invocations_of_one_kernel():
    text = CSV_HEADER + "gemm,0,1200,dram_throughput_pct,87.5\ngemm,0,1200,stall.long_scoreboard,0.42\ngemm,1,800,dram_throughput_pct,60\n"
    r = parse_profile_report(text)
    assert [(k.kernel_name, k.invocation_index, k.elapsed_cycles) for k in r.kernels] == [("gemm", 0, 1200), ("gemm", 1, 800)]
    assert r.kernels[0].metrics == {"dram_throughput_pct": 87.5}
    assert r.kernels[0].stall_breakdown == {"long_scoreboard": 0.42}


def test_header_only_is_empty():
    with pytest.raises(EmptyProfile):
        parse_profile_report(CSV_HEADER)


@pytest.mark.parametrize(
    "row",
    [
        "k,0,-5,m,1",
        "k,0,0,m,1",
        "k,-1,10,m,1",
        "k,0,10,m,abc",
        "k,0,10,m",
        "k,0,1.5,m,1",
    ],
)
def test_malformed_rows_carry_row_locus(row):
    with pytest.raises(MalformedProfile) as err:
        parse_profile_report(CSV_HEADER + row + "\n")
    assert "2" in str(err.value)


def test_non_contiguous_invocation_rejected():
    text = CSV_HEADER + "a,0,10,m,1\nb,0,10,m,1\na,0,10,n,2\n"
    with pytest.raises(MalformedProfile, match="contiguous"):
        parse_profile_report(text)


def test_bad_header_rejected():
    with pytest.raises(MalformedProfile):
        parse_profile_report("name,cycles\nk,1\n")


def test_stall_fractions_above_one_rejected():
    text = CSV_HEADER + "k,0,10,stall.a,0.7\nk,0,10,stall.b,0.6\n"
    with pytest.raises(MalformedProfile):
        parse_profile_report(text)


def test_cycle_totals_and_rewards():
    assert total_elapsed_cycles(report(1000)) == 1000
    assert total_elapsed_cycles(report(300, 700)) == 1000
    assert compute_reward(report(1000), report(500)) == 2.0
    assert compute_reward(report(500), report(1000)) == 0.5
    assert compute_reward(report(700, 300), report(700, 300)) == 1.0
    assert speedup_vs_baseline(2000, report(1000)) == 2.0
    assert speedup_vs_baseline(1000, report(400, 600)) == 1.0
    with pytest.raises(EmptyProfile):
        total_elapsed_cycles(ProfileReport(()))


def test_total_matches_summation_oracle():
    rng = random.Random(11)
    cycles = [rng.randint(1, 10**7) for _ in range(50)]
    acc = 0
    for c in cycles:
        acc += c
    assert total_elapsed_cycles(report(*cycles)) == acc
    baseline = rng.randint(1, 10**9)
    assert speedup_vs_baseline(baseline, report(*cycles)) == baseline / acc


cycle_lists = st.lists(st.integers(1, 10**9), min_size=1, max_size=30)


@given(cycle_lists, cycle_lists)
def test_reward_reciprocity(a, b):
    ra, rb = report(*a), report(*b)
    assert math.isclose(compute_reward(ra, rb) * compute_reward(rb, ra), 1.0, rel_tol=1e-12)
    assert compute_reward(ra, ra) == 1.0


@given(cycle_lists, st.randoms())
def test_total_is_permutation_invariant(cycles, rnd):
    shuffled = list(cycles)
    rnd.shuffle(shuffled)
    assert total_elapsed_cycles(report(*cycles)) == total_elapsed_cycles(report(*shuffled))


metric_maps = st.dictionaries(st.sampled_from(["dram_throughput_pct", "sm_fp_throughput_pct", "occ"]), st.floats(0, 100), max_size=3)
stall_maps = st.dictionaries(st.sampled_from(["long_scoreboard", "barrier"]), st.floats(0, 0.5), max_size=2)


@given(st.lists(st.tuples(st.integers(1, 10**6), metric_maps, stall_maps), min_size=1, max_size=8))
def test_format_parse_round_trip(rows):
    r = ProfileReport(tuple(KernelProfile(f"k{i % 2}", i // 2, c, m, s) for i, (c, m, s) in enumerate(rows)))
    assert parse_profile_report(format_profile_report(r)) == r


def test_aggregate_is_cycle_weighted():
    r = ProfileReport(
        (
            KernelProfile("a", 0, 100, {"dram_throughput_pct": 90.0}),
            KernelProfile("b", 0, 300, {"dram_throughput_pct": 10.0, "sm_fp_throughput_pct": 50.0}),
        )
    )
    metrics, stalls = aggregate_metrics(r)
    assert metrics == {"dram_throughput_pct": 30.0, "sm_fp_throughput_pct": 50.0}
    assert stalls == {}
