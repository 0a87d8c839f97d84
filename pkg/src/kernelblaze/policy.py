"""Optimization selection: seeded weighted top-k sampling and candidate proposal."""

from __future__ import annotations

import hashlib
import logging
import math
from typing import Iterable, Sequence

from .errors import EmptyCandidates, EmptyProposal, ParseFailure
from .knowledge_base import KnowledgeBase, OptimizationEntry, PerformanceState, slugify
from .profile import ProfileReport, summarize_profile

logger = logging.getLogger(__name__)

EPSILON = 0.05
DEFAULT_TOP_K = 4
GAIN_CLAMP = (0.5, 10.0)
MAX_PROPOSALS = 8

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (output, next_state)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31), state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** seeded through splitmix64; identical streams on every platform."""

    def __init__(self, seed: int | None = None, *, state: Sequence[int] | None = None):
        if state is not None:
            self.s = [int(x) & _MASK for x in state]
        else:
            sm = int(seed or 0) & _MASK
            self.s = []
            for _ in range(4):
                out, sm = splitmix64(sm)
                self.s.append(out)

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        """Uniform on the open interval (0, 1)."""
        return ((self.next_u64() >> 11) + 0.5) * (1.0 / (1 << 53))


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from any tuple of ints/strings (blake2b, not ``hash()``)."""
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def selection_weight(predicted_gain: float, eps: float = EPSILON) -> float:
    return max(predicted_gain - 1.0, eps) + eps


def exponential_key_sample(weights: Sequence[float], k: int, seed: int) -> list[int]:
    """Weighted sampling without replacement by exponential keys (A-Res).

    Each item draws u ~ U(0,1) and gets key u**(1/w); the k largest keys win and
    are returned as indices in descending key order.  Ties keep input order.
    """
    if not weights:
        raise EmptyCandidates("no candidates to sample from")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = Xoshiro256(seed)
    keyed = []
    for i, w in enumerate(weights):
        if not w > 0:
            raise ValueError(f"weight {i} must be positive, got {w}")
        # log(u)/w orders identically to u**(1/w) and does not underflow
        keyed.append((math.log(rng.uniform()) / w, i))
    keyed.sort(key=lambda t: (-t[0], t[1]))
    return [i for _, i in keyed[:k]]


def weighted_top_k(candidates: Sequence[OptimizationEntry], k: int, seed: int) -> list[OptimizationEntry]:
    if not candidates:
        raise EmptyCandidates("no candidate optimizations")
    idx = exponential_key_sample([selection_weight(c.predicted_gain) for c in candidates], k, seed)
    return [candidates[i] for i in idx]


def candidate_set(kb: KnowledgeBase, state_id: str) -> list[OptimizationEntry]:
    return list(kb.state(state_id).optimizations)


def _clamp(x: float) -> float:
    lo, hi = GAIN_CLAMP
    return min(max(x, lo), hi)


def entries_from_proposals(items: Iterable[dict]) -> list[OptimizationEntry]:
    out: list[OptimizationEntry] = []
    seen: set[str] = set()
    for item in items:
        opt_id = slugify(item["name"])
        if not opt_id or opt_id in seen:
            continue
        seen.add(opt_id)
        out.append(
            OptimizationEntry(
                opt_id=opt_id,
                name=item["name"],
                description=item.get("description", ""),
                predicted_gain=_clamp(float(item["predicted_gain"])),
            )
        )
        if len(out) == MAX_PROPOSALS:
            break
    return out


def propose_new_optimizations(
    agent,
    state: PerformanceState,
    report: ProfileReport,
    *,
    attempts: int = 2,
    events: list | None = None,
) -> list[OptimizationEntry]:
    """Ask the proposer agent for 1-8 fresh candidates for ``state``."""
    from .agents import AgentRequest, Role, parse_structured, render_prompt

    prompt = render_prompt(
        Role.OPTIMIZATION_PROPOSER,
        {
            "state_name": state.display_name,
            "primary_bottleneck": state.primary_bottleneck,
            "secondary_bottleneck": state.secondary_bottleneck or "none",
            "description": state.description or "(none)",
            "profile_summary": summarize_profile(report),
        },
    )
    for _ in range(attempts):
        response = agent.complete(AgentRequest(Role.OPTIMIZATION_PROPOSER, prompt, "proposals"))
        if events is not None:
            events.append(response)
        try:
            entries = entries_from_proposals(parse_structured(response.text, "proposals"))
        except ParseFailure as exc:
            logger.info("proposal rejected: %s", exc)
            continue
        if entries:
            return entries
    raise EmptyProposal(f"no valid proposals for state {state.state_id}")
