"""Command line: optimize, simulate, kb show|validate|merge, report."""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import icrl, knowledge_base as kbm, metrics, simenv
from .agents import LiveAgent, MockAgent, SimAgent
from .errors import (
    CredentialMissing,
    EmptyResults,
    InvalidSpec,
    KernelBlazeError,
    MalformedFile,
    UnsortedThresholds,
)
from .harness import RetryBudget, TaskSpec

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

logger = logging.getLogger("kernelblaze")

DEFAULT_FROZEN_TIME = "2000-01-01T00:00:00Z"
OPTIMIZE_DEFAULTS = {
    "tasks": None,
    "kb": None,
    "init_empty": False,
    "backend": "sim",
    "agent": "sim",
    "model": "gpt-4.1",
    "seed": 0,
    "iterations": 10,
    "rollout_steps": 10,
    "trajectories": 8,
    "top_k": 4,
    "alpha": kbm.DEFAULT_ALPHA,
    "jobs": None,
    "reset_kb_each_iteration": False,
    "gap_agent": False,
    "out": None,
}


class ConfigError(Exception):
    """Bad flags, config file or inputs (exit code 1)."""


# ---------------------------------------------------------------------------
# helpers


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _time_context(frozen: str | None):
    return kbm.frozen_time(frozen) if frozen else contextlib.nullcontext()


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(OPTIMIZE_DEFAULTS)
    if args.config:
        try:
            with open(args.config, "rb") as fh:
                doc = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        unknown = sorted(set(doc) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(doc)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            cfg[key] = value
    if cfg["jobs"] is None:
        cfg["jobs"] = os.cpu_count() or 1
    if isinstance(cfg["tasks"], str):
        cfg["tasks"] = [cfg["tasks"]]
    return cfg


def _task_files(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.task.json")))
        elif p.is_file():
            files.append(p)
        else:
            raise ConfigError(f"task path not found: {p}")
    if not files:
        raise ConfigError("no task files (*.task.json) found")
    return files


def _make_agent(spec: str, model: str):
    if spec == "sim":
        return SimAgent()
    if spec == "live":
        return LiveAgent.from_env(model=model)
    if spec.startswith("mock:"):
        path = spec[len("mock:"):]
        try:
            return MockAgent.from_file(path, fallback=SimAgent())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read mock script {path}: {exc}") from exc
    raise ConfigError(f"unknown agent {spec!r} (expected sim, live or mock:PATH)")


def _load_kb(path: str | None, init_empty: bool) -> kbm.KnowledgeBase:
    if path and Path(path).exists():
        return kbm.load(path)
    if init_empty:
        return kbm.KnowledgeBase()
    if not path:
        raise ConfigError("--kb is required unless --init-empty is given")
    raise ConfigError(f"knowledge base not found: {path} (use --init-empty to start from scratch)")


# ---------------------------------------------------------------------------
# commands


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if cfg["backend"] != "sim":
        raise ConfigError(f"unknown backend {cfg['backend']!r}; available: sim")
    if not cfg["tasks"]:
        raise ConfigError("--tasks is required")
    if not cfg["out"]:
        raise ConfigError("--out is required")
    out = Path(cfg["out"])

    specs: list[TaskSpec] = []
    env = simenv.SimBackend()
    for f in _task_files(cfg["tasks"]):
        spec = TaskSpec.from_file(f)
        if not spec.synthetic:
            raise ConfigError(f"{f}: the sim backend needs a 'synthetic' task dump")
        task = simenv.SyntheticTask.load(spec.synthetic)
        env.add_task(task)
        specs.append(spec)

    try:
        config = icrl.IcrlConfig(
            iterations=int(cfg["iterations"]),
            rollout_steps=int(cfg["rollout_steps"]),
            trajectories_per_task=int(cfg["trajectories"]),
            top_k=int(cfg["top_k"]),
            alpha=float(cfg["alpha"]),
            run_seed=int(cfg["seed"]),
            jobs=int(cfg["jobs"]),
            reset_kb_each_iteration=bool(cfg["reset_kb_each_iteration"]),
            gap_agent=bool(cfg["gap_agent"]),
            retry_budget=RetryBudget(),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    with _time_context(args.frozen_time):
        kb = _load_kb(cfg["kb"], bool(cfg["init_empty"]))
        agent = _make_agent(cfg["agent"], cfg["model"])
        events: list = []
        result = icrl.run_loop(specs, kb, env, agent, config, events=events)
        out.mkdir(parents=True, exist_ok=True)
        kbm.save(result.kb, out / "kb.json")

    trajectories = result.trajectories
    icrl.write_trajectory_log(out / "trajectories.jsonl", trajectories, config.run_seed)
    rows = icrl.summary_records(trajectories)
    lines = ["task_id,valid,best_speedup,best_variant,tokens_in,tokens_out,backend_error"]
    for spec in sorted(specs, key=lambda s: s.task_id):
        rec = rows.get(spec.task_id, {"valid": False, "speedup": 0.0, "tokens_in": 0, "tokens_out": 0, "backend_error": False})
        best = result.best.get(spec.task_id)
        lines.append(
            f"{spec.task_id},{int(rec['valid'])},{rec['speedup']!r},{best.variant_id if best else ''},"
            f"{rec['tokens_in']},{rec['tokens_out']},{int(rec['backend_error'])}"
        )
    _write(out / "summary.csv", "\n".join(lines) + "\n")

    all_events = [e for t in trajectories for e in t.events] + events
    resolved = {k: v for k, v in cfg.items() if k not in ("out", "jobs")}
    resolved["icrl"] = {k: v for k, v in config.to_dict().items() if k != "jobs"}
    manifest = {
        "artifacts": ["kb.json", "summary.csv", "trajectories.jsonl"],
        "config": resolved,
        "config_hash": hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest(),
        "tokens": metrics.token_accounting(all_events),
        "backend_errors": [e for it in result.iterations for e in it.backend_errors],
        "errors": [e for it in result.iterations for e in it.errors],
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    if manifest["backend_errors"]:
        print(f"backend errors in {len(manifest['backend_errors'])} rollouts; see {out / 'manifest.json'}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


def _depth_for(seed: int, depth: str) -> int:
    lo, _, hi = depth.partition("-")
    lo_i, hi_i = int(lo), int(hi or lo)
    if hi_i < lo_i:
        raise ConfigError(f"bad depth range {depth!r}")
    return lo_i + seed % (hi_i - lo_i + 1)


def cmd_simulate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    oracle: dict[str, dict] = {}
    for i in range(args.tasks):
        seed = args.seed + i
        spec = {"n_states": args.n_states, "n_opts": args.n_opts, "depth_of_best_chain": _depth_for(seed, args.depth)}
        task = simenv.make_synthetic_task(seed, spec)
        tid = task.task_id
        _write(out / f"{tid}.sim.json", task.dumps())
        _write(out / f"{tid}.reference.cu", simenv.render_reference(task))
        _write(out / f"{tid}.start.cu", simenv.render_variant(task, simenv.start_variant(task)))
        doc = {
            "task_id": tid,
            "level": task.level,
            "reference_code": f"{tid}.reference.cu",
            "starting_variant": f"{tid}.start.cu",
            "baseline_cycles": task.baseline_cycles,
            "declared_ops": task.declared_ops,
            "synthetic": f"{tid}.sim.json",
        }
        _write(out / f"{tid}.task.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        oracle[tid] = {}
        for d in range(args.max_depth + 1):
            o = simenv.optimal_speedup(task, d)
            oracle[tid][str(d)] = {"best_factor_chain": o["best_factor_chain"], "best_speedup": o["best_speedup"]}
    _write(out / "oracle.json", json.dumps(oracle, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.tasks} tasks to {out}")
    return 0


def cmd_kb(args: argparse.Namespace) -> int:
    if args.kb_command == "validate":
        kbm.load(args.path)
        print(f"{args.path}: valid")
        return 0
    if args.kb_command == "show":
        kb = kbm.load(args.path)
        print(f"format {kb.format_version}  hardware {kb.hardware_tag or '-'}  updates {kb.update_count}  states {len(kb.states)}")
        for s in kb.states:
            top = sorted(s.optimizations, key=lambda o: (-o.predicted_gain, o.opt_id))[: args.top]
            best = ", ".join(f"{o.opt_id} {o.predicted_gain:.3f} (n={o.observation_count})" for o in top)
            print(f"  {s.state_id:<48} {len(s.optimizations):>3} opts  {best}")
        return 0
    with _time_context(args.frozen_time):
        merged = kbm.merge(kbm.load(args.a), kbm.load(args.b))
    kbm.save(merged, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    trajectories = icrl.read_trajectory_log(args.log)
    rows = icrl.summary_records(trajectories)
    results = [
        metrics.TaskResult(tid, r["valid"], r["speedup"], r["tokens_in"], r["tokens_out"], r["backend_error"])
        for tid, r in rows.items()
    ]
    try:
        thresholds = [float(x) for x in args.fastp.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --fastp list: {exc}") from exc
    summary = metrics.summarize(results)
    curve = metrics.fast_p_curve(results, thresholds)
    out = Path(args.out)
    _write(out / "summary.csv", metrics.summary_csv([(args.label, summary)]))
    _write(out / "table_row.tex", metrics.table_row(args.label, summary) + "\n")
    _write(out / "fastp.csv", metrics.curve_csv(curve))
    _write(out / "fastp.svg", metrics.curve_svg(curve, f"fast_p ({args.label})"))
    _write(out / "usage.csv", metrics.usage_csv(metrics.usage_report(trajectories)))
    print(metrics.table_row(args.label, summary))
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kernelblaze", description="Knowledge-base guided kernel optimization search.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    o = sub.add_parser("optimize", help="run optimization iterations over tasks")
    o.add_argument("--tasks", nargs="+", help="task files or directories of *.task.json")
    o.add_argument("--kb", help="knowledge base to start from")
    o.add_argument("--init-empty", action="store_true", help="start from an empty KB when --kb is absent")
    o.add_argument("--backend", help="execution backend (sim)")
    o.add_argument("--agent", help="sim | live | mock:SCRIPT.json")
    o.add_argument("--model", help="model name for --agent live")
    o.add_argument("--seed", type=int)
    o.add_argument("--iterations", type=int)
    o.add_argument("--rollout-steps", dest="rollout_steps", type=int)
    o.add_argument("--trajectories", type=int)
    o.add_argument("--top-k", dest="top_k", type=int)
    o.add_argument("--alpha", type=float)
    o.add_argument("--jobs", type=int, help="concurrent rollouts (default: CPU count)")
    o.add_argument("--reset-kb-each-iteration", dest="reset_kb_each_iteration", action="store_true")
    o.add_argument("--gap-agent", dest="gap_agent", action="store_true", help="let the agent propose KB additions")
    o.add_argument("--config", help="TOML file with defaults for the flags above")
    o.add_argument("--frozen-time", nargs="?", const=DEFAULT_FROZEN_TIME)
    o.add_argument("--out", help="output directory")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("simulate", help="generate synthetic tasks and oracle answers")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tasks", type=int, default=5)
    s.add_argument("--n-states", dest="n_states", type=int, default=4)
    s.add_argument("--n-opts", dest="n_opts", type=int, default=6)
    s.add_argument("--depth", default="2", help="planted chain depth, or a range like 2-3")
    s.add_argument("--max-depth", dest="max_depth", type=int, default=4)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    k = sub.add_parser("kb", help="inspect or combine knowledge bases")
    ksub = k.add_subparsers(dest="kb_command", required=True)
    ks = ksub.add_parser("show")
    ks.add_argument("path")
    ks.add_argument("--top", type=int, default=3)
    kv = ksub.add_parser("validate")
    kv.add_argument("path")
    km = ksub.add_parser("merge")
    km.add_argument("a")
    km.add_argument("b")
    km.add_argument("--out", required=True)
    km.add_argument("--frozen-time", nargs="?", const=DEFAULT_FROZEN_TIME)
    k.set_defaults(func=cmd_kb)

    r = sub.add_parser("report", help="summaries, fast_p curves and usage from a trajectory log")
    r.add_argument("--log", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--fastp", default="0,0.5,1,1.5,2,3")
    r.add_argument("--label", default="Ours")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MalformedFile as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, CredentialMissing, InvalidSpec, EmptyResults, UnsortedThresholds) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KernelBlazeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
