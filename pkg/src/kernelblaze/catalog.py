"""Optimization vocabulary shared by the synthetic environment and the simulated agent.

``LABEL_CANDIDATES`` is what a proposer "knows" about each bottleneck (it is the
agent's prior, not ground truth).  ``WORLD_EFFECTS`` is the hidden ground truth
the synthetic environment samples task effect tables from; the agent never reads it.
"""

from __future__ import annotations

OPTIMIZATIONS: dict[str, str] = {
    "shared_memory_tiling": "Stage reused operand tiles in shared memory to cut global-memory traffic.",
    "memory_coalescing": "Reorder thread-to-data mapping so warps issue contiguous, aligned loads.",
    "vectorized_access": "Use 128-bit vector loads and stores (float4/half8).",
    "kernel_fusion": "Fuse producer and consumer kernels so intermediates stay on chip.",
    "data_layout_transform": "Change tensor layout (e.g. NCHW to NHWC) to match the access pattern.",
    "async_copy_pipelining": "Double-buffer global-to-shared copies with cp.async to hide latency.",
    "instruction_level_parallelism": "Interleave independent work per thread to hide dependent-instruction latency.",
    "loop_unrolling": "Unroll inner loops to remove branch overhead and expose ILP.",
    "register_pressure_reduction": "Shrink live ranges and spill-prone temporaries to raise occupancy.",
    "block_size_tuning": "Retune threads per block for better occupancy and tail behaviour.",
    "thread_coarsening": "Let each thread produce several outputs to amortize index math.",
    "grid_size_optimization": "Resize the launch grid to the SM count and problem shape.",
    "control_flow_simplification": "Hoist or predicate divergent branches out of hot loops.",
    "tensor_core_utilization": "Map the inner product onto tensor-core MMA instructions.",
    "fast_math": "Use fast intrinsics (__expf, __fdividef) where accuracy allows.",
}

LABEL_CANDIDATES: dict[str, tuple[str, ...]] = {
    "dram_bandwidth_bound": (
        "shared_memory_tiling",
        "memory_coalescing",
        "vectorized_access",
        "kernel_fusion",
        "data_layout_transform",
        "async_copy_pipelining",
        "grid_size_optimization",
        "fast_math",
    ),
    "latency_stall_bound": (
        "async_copy_pipelining",
        "instruction_level_parallelism",
        "loop_unrolling",
        "shared_memory_tiling",
        "register_pressure_reduction",
        "control_flow_simplification",
        "grid_size_optimization",
        "fast_math",
    ),
    "occupancy_limited": (
        "register_pressure_reduction",
        "block_size_tuning",
        "thread_coarsening",
        "shared_memory_tiling",
        "grid_size_optimization",
        "loop_unrolling",
        "data_layout_transform",
        "fast_math",
    ),
    "launch_overhead_bound": (
        "kernel_fusion",
        "thread_coarsening",
        "grid_size_optimization",
        "block_size_tuning",
        "control_flow_simplification",
        "data_layout_transform",
        "loop_unrolling",
        "fast_math",
    ),
    "compute_fp_bound": (
        "tensor_core_utilization",
        "fast_math",
        "instruction_level_parallelism",
        "loop_unrolling",
        "register_pressure_reduction",
        "thread_coarsening",
        "control_flow_simplification",
        "grid_size_optimization",
    ),
    "balanced": (
        "instruction_level_parallelism",
        "loop_unrolling",
        "grid_size_optimization",
        "block_size_tuning",
        "fast_math",
        "thread_coarsening",
        "control_flow_simplification",
        "vectorized_access",
    ),
}

GENERIC_CANDIDATES: tuple[str, ...] = (
    "shared_memory_tiling",
    "memory_coalescing",
    "kernel_fusion",
    "instruction_level_parallelism",
    "register_pressure_reduction",
    "block_size_tuning",
    "loop_unrolling",
    "grid_size_optimization",
)

PRIOR_GAIN = 1.5

# (label, optimization) -> (cycle factor, kind).  kind is one of
# prep / payoff / good / micro / decoy / regress / compile / verify.
WORLD_EFFECTS: dict[tuple[str, str], tuple[float, str]] = {
    ("dram_bandwidth_bound", "shared_memory_tiling"): (0.72, "prep"),
    ("dram_bandwidth_bound", "memory_coalescing"): (0.80, "prep"),
    ("dram_bandwidth_bound", "data_layout_transform"): (0.82, "prep"),
    ("dram_bandwidth_bound", "kernel_fusion"): (0.84, "good"),
    ("dram_bandwidth_bound", "vectorized_access"): (0.86, "good"),
    ("dram_bandwidth_bound", "async_copy_pipelining"): (0.90, "good"),
    ("dram_bandwidth_bound", "grid_size_optimization"): (1.0, "decoy"),
    ("dram_bandwidth_bound", "fast_math"): (1.0, "decoy"),
    ("latency_stall_bound", "async_copy_pipelining"): (0.74, "prep"),
    ("latency_stall_bound", "shared_memory_tiling"): (0.83, "prep"),
    ("latency_stall_bound", "control_flow_simplification"): (0.86, "prep"),
    ("latency_stall_bound", "instruction_level_parallelism"): (0.85, "good"),
    ("latency_stall_bound", "loop_unrolling"): (0.88, "good"),
    ("latency_stall_bound", "register_pressure_reduction"): (1.03, "regress"),
    ("latency_stall_bound", "grid_size_optimization"): (1.0, "decoy"),
    ("latency_stall_bound", "fast_math"): (0.80, "verify"),
    ("occupancy_limited", "register_pressure_reduction"): (0.76, "prep"),
    ("occupancy_limited", "block_size_tuning"): (0.83, "prep"),
    ("occupancy_limited", "thread_coarsening"): (0.90, "good"),
    ("occupancy_limited", "data_layout_transform"): (0.90, "good"),
    ("occupancy_limited", "grid_size_optimization"): (0.97, "micro"),
    ("occupancy_limited", "loop_unrolling"): (1.06, "regress"),
    ("occupancy_limited", "shared_memory_tiling"): (0.70, "compile"),
    ("occupancy_limited", "fast_math"): (1.0, "decoy"),
    ("launch_overhead_bound", "kernel_fusion"): (0.62, "prep"),
    ("launch_overhead_bound", "thread_coarsening"): (0.80, "prep"),
    ("launch_overhead_bound", "grid_size_optimization"): (0.92, "good"),
    ("launch_overhead_bound", "control_flow_simplification"): (0.90, "good"),
    ("launch_overhead_bound", "block_size_tuning"): (0.95, "good"),
    ("launch_overhead_bound", "data_layout_transform"): (0.75, "verify"),
    ("launch_overhead_bound", "loop_unrolling"): (1.0, "decoy"),
    ("launch_overhead_bound", "fast_math"): (1.0, "decoy"),
    ("compute_fp_bound", "tensor_core_utilization"): (0.36, "payoff"),
    ("compute_fp_bound", "fast_math"): (0.86, "good"),
    ("compute_fp_bound", "instruction_level_parallelism"): (0.90, "good"),
    ("compute_fp_bound", "loop_unrolling"): (0.93, "good"),
    ("compute_fp_bound", "register_pressure_reduction"): (0.95, "good"),
    ("compute_fp_bound", "control_flow_simplification"): (0.97, "micro"),
    ("compute_fp_bound", "thread_coarsening"): (1.04, "regress"),
    ("compute_fp_bound", "grid_size_optimization"): (1.0, "decoy"),
    ("balanced", "instruction_level_parallelism"): (0.98, "micro"),
    ("balanced", "loop_unrolling"): (0.985, "micro"),
    ("balanced", "block_size_tuning"): (0.99, "micro"),
    ("balanced", "vectorized_access"): (0.99, "micro"),
    ("balanced", "fast_math"): (0.99, "micro"),
    ("balanced", "grid_size_optimization"): (1.0, "decoy"),
    ("balanced", "control_flow_simplification"): (1.0, "decoy"),
    ("balanced", "thread_coarsening"): (1.02, "regress"),
}

PREP_LABELS = ("dram_bandwidth_bound", "latency_stall_bound", "occupancy_limited", "launch_overhead_bound")
PAYOFF_LABEL = "compute_fp_bound"
TERMINAL_LABEL = "balanced"
PAYOFF_OPT = "tensor_core_utilization"


def candidates_for(label: str) -> tuple[str, ...]:
    return LABEL_CANDIDATES.get(label, GENERIC_CANDIDATES)
