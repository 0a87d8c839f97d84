"""Deterministic agents: a scripted mock and a rule-driven simulated agent."""

from __future__ import annotations

import json
import re
import threading
from collections import defaultdict, deque
from pathlib import Path

from ..catalog import OPTIMIZATIONS, PRIOR_GAIN, candidates_for
from ..errors import ScriptExhausted
from .core import AgentRequest, AgentResponse, Role


def count_tokens(text: str) -> int:
    """Whitespace token count; stands in for a tokenizer in deterministic runs."""
    return len(text.split())


class MockAgent:
    """Replays scripted responses keyed by (role_id, call_index).

    Once a role's script runs out the ``fallback`` agent answers, or
    ScriptExhausted is raised when there is none.
    """

    def __init__(self, script: list[dict] | None = None, fallback=None):
        self._queues: dict[str, deque] = defaultdict(deque)
        for item in script or []:
            self._queues[Role(item["role_id"]).value].append(item)
        self.fallback = fallback
        self.call_index: dict[str, int] = defaultdict(int)
        self.calls: list[tuple[AgentRequest, AgentResponse]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path, fallback=None) -> MockAgent:
        script = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(script, list):
            raise ValueError("mock script must be a JSON array")
        return cls(script, fallback=fallback)

    def complete(self, request: AgentRequest) -> AgentResponse:
        role = request.role_id.value
        with self._lock:
            queue = self._queues[role]
            if queue:
                item = queue.popleft()
                response = AgentResponse(
                    text=item["text"],
                    prompt_tokens=int(item.get("prompt_tokens", 0)),
                    completion_tokens=int(item.get("completion_tokens", 0)),
                    role_id=role,
                )
            elif self.fallback is not None:
                response = self.fallback.complete(request)
            else:
                raise ScriptExhausted(f"no scripted response for {role} call {self.call_index[role]}")
            self.call_index[role] += 1
            self.calls.append((request, response))
        return response


_FIELD = re.compile(r"^\s*([A-Za-z_]+):\s*(\S+)", re.MULTILINE)


class SimAgent:
    """Rule-driven agent whose answers are a pure function of the prompt.

    It knows the optimization vocabulary (the proposer prior) but nothing about
    any task's true effects, so all learning has to come from the loop.
    """

    def __init__(self, prior_gain: float = PRIOR_GAIN):
        self.prior_gain = prior_gain

    def complete(self, request: AgentRequest) -> AgentResponse:
        handler = getattr(self, f"_{request.role_id.value}", None)
        text = handler(request.rendered_prompt) if handler else "{}"
        return AgentResponse(
            text=text,
            prompt_tokens=count_tokens(request.rendered_prompt),
            completion_tokens=count_tokens(text),
            role_id=request.role_id.value,
        )

    @staticmethod
    def _field(prompt: str, name: str) -> str | None:
        for key, value in _FIELD.findall(prompt):
            if key == name:
                return value
        return None

    def _optimization_proposer(self, prompt: str) -> str:
        label = self._field(prompt, "primary_bottleneck") or ""
        items = [
            {"name": name, "description": OPTIMIZATIONS.get(name, ""), "predicted_gain": self.prior_gain}
            for name in candidates_for(label)
        ]
        return "```json\n" + json.dumps(items, indent=1) + "\n```"

    def _lowering(self, prompt: str) -> str:
        opt = self._field(prompt, "Optimization") or "noop"
        m = re.search(r"kernelblaze-sim variant (\S+)", prompt)
        parent = m.group(1) if m else "unknown"
        patch = f"// kernelblaze-sim patch\n// parent: {parent}\n// apply: {opt}\n"
        return f"```cuda\n{patch}```"

    def _perf_gap_analysis(self, prompt: str) -> str:
        return json.dumps({"rationale": "No structural changes proposed.", "new_states": [], "new_optimizations": []})

    def _policy_evaluation_summarizer(self, prompt: str) -> str:
        return json.dumps({"summary": "See the gap table."})

    def _soft_verifier(self, prompt: str) -> str:
        from ..harness import lint_variant

        m = re.search(r"=== REFERENCE ===\n(.*?)=== CANDIDATE ===\n(.*?)=== END ===", prompt, re.DOTALL)
        if not m:
            return json.dumps({"verdict": "reject", "reason": "other", "detail": "missing code sections"})
        verdict = lint_variant(m.group(2), m.group(1))
        return json.dumps(
            {"verdict": "accept" if verdict.accepted else "reject", "reason": verdict.reason, "detail": verdict.detail}
        )
