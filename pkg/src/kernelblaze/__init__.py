"""Knowledge-base guided search over code optimizations, with a deterministic simulator."""

from .errors import KernelBlazeError
from .icrl import IcrlConfig, run_iteration, run_loop, run_rollout
from .knowledge_base import KnowledgeBase, OptimizationEntry, PerformanceState

__version__ = "0.1.0"

__all__ = [
    "IcrlConfig",
    "KernelBlazeError",
    "KnowledgeBase",
    "OptimizationEntry",
    "PerformanceState",
    "run_iteration",
    "run_loop",
    "run_rollout",
]
