import json

import pytest

from kernelblaze import knowledge_base as kbm
from kernelblaze.cli import main
from kernelblaze.simenv import SyntheticTask, optimal_speedup


def _tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def tasks_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tasks")
    assert main(["simulate", "--seed", "7", "--tasks", "3", "--depth", "2-3", "--max-depth", "3", "--out", str(out)]) == 0
    return out


def test_simulate_writes_tasks_and_oracle(tasks_dir, tmp_path):
    assert len(list(tasks_dir.glob("*.task.json"))) == 3
    oracle = json.loads((tasks_dir / "oracle.json").read_text())
    for tid, per_depth in oracle.items():
        task = SyntheticTask.load(tasks_dir / f"{tid}.sim.json")
        for d, ans in per_depth.items():
            assert ans["best_speedup"] == optimal_speedup(task, int(d))["best_speedup"]
    again = tmp_path / "again"
    main(["simulate", "--seed", "7", "--tasks", "3", "--depth", "2-3", "--max-depth", "3", "--out", str(again)])
    assert _tree(again) == _tree(tasks_dir)


def test_simulate_invalid_spec_exits_1(tmp_path):
    assert main(["simulate", "--n-states", "1", "--out", str(tmp_path)]) == 1


def _optimize(tasks_dir, out, *extra):
    return main(
        ["optimize", "--tasks", str(tasks_dir), "--init-empty", "--iterations", "2", "--rollout-steps", "3",
         "--trajectories", "2", "--seed", "7", "--frozen-time", "--out", str(out), *extra]
    )


def test_optimize_is_byte_identical(tasks_dir, tmp_path):
    script = tmp_path / "script.json"
    script.write_text(json.dumps([{"role_id": "lowering", "text": "not code", "prompt_tokens": 10, "completion_tokens": 5}]))
    assert _optimize(tasks_dir, tmp_path / "r1", "--agent", f"mock:{script}") == 0
    assert _optimize(tasks_dir, tmp_path / "r2", "--agent", f"mock:{script}") == 0
    a, b = _tree(tmp_path / "r1"), _tree(tmp_path / "r2")
    assert a == b
    assert {"kb.json", "trajectories.jsonl", "summary.csv", "manifest.json"} <= set(a)
    manifest = json.loads(a["manifest.json"])
    assert manifest["tokens"]["per_role"]["lowering"]["in"] >= 10


def test_jobs_do_not_change_outputs(tasks_dir, tmp_path):
    _optimize(tasks_dir, tmp_path / "j1", "--jobs", "1")
    _optimize(tasks_dir, tmp_path / "j3", "--jobs", "3")
    assert _tree(tmp_path / "j1") == _tree(tmp_path / "j3")


def test_optimize_config_errors(tasks_dir, tmp_path, capsys):
    assert _optimize(tasks_dir, tmp_path / "x", "--backend", "cuda") == 1
    assert "unknown backend" in capsys.readouterr().err
    assert main(["optimize", "--tasks", str(tasks_dir), "--out", str(tmp_path / "y")]) == 1
    assert main(["optimize", "--tasks", str(tmp_path / "nowhere"), "--init-empty", "--out", str(tmp_path / "z")]) == 1


def test_live_agent_without_key(tasks_dir, tmp_path, monkeypatch):
    monkeypatch.delenv("KERNELBLAZE_API_KEY", raising=False)
    assert _optimize(tasks_dir, tmp_path / "live", "--agent", "live") == 1


def test_config_file_and_flag_precedence(tasks_dir, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('iterations = 1\nrollout_steps = 2\ntrajectories = 1\nseed = 3\n')
    out = tmp_path / "cfg"
    assert main(["optimize", "--config", str(cfg), "--tasks", str(tasks_dir), "--init-empty", "--trajectories", "2", "--frozen-time", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["icrl"]["iterations"] == 1 and manifest["config"]["icrl"]["trajectories_per_task"] == 2
    lines = (out / "trajectories.jsonl").read_text().splitlines()
    assert len(lines) == 3 * 2
    bad = tmp_path / "bad.toml"
    bad.write_text("bogus = 1\n")
    assert main(["optimize", "--config", str(bad), "--tasks", str(tasks_dir), "--init-empty", "--out", str(out)]) == 1


def test_backend_failure_exit_code(tasks_dir, tmp_path, monkeypatch):
    from kernelblaze import simenv

    original = simenv.SimBackend.__init__

    def flaky(self, *a, **kw):
        original(self, *a, **kw)
        self.fail_after = 5

    monkeypatch.setattr(simenv.SimBackend, "__init__", flaky)
    out = tmp_path / "flaky"
    assert _optimize(tasks_dir, out) == 2
    assert json.loads((out / "manifest.json").read_text())["backend_errors"]


def test_kb_commands(tmp_path, capsys, small_kb):
    path = tmp_path / "kb.json"
    kbm.save(small_kb, path)
    assert main(["kb", "validate", str(path)]) == 0
    assert main(["kb", "show", str(path)]) == 0
    assert "dram_bandwidth_bound" in capsys.readouterr().out
    broken = tmp_path / "broken.json"
    broken.write_text(path.read_text()[:40])
    assert main(["kb", "validate", str(broken)]) == 1
    assert main(["kb", "validate", str(tmp_path / "missing.json")]) == 1
    empty = tmp_path / "empty.json"
    kbm.save(kbm.KnowledgeBase(created_at=small_kb.created_at, updated_at=small_kb.updated_at), empty)
    merged = tmp_path / "merged.json"
    assert main(["kb", "merge", str(path), str(empty), "--out", str(merged), "--frozen-time"]) == 0
    assert merged.read_bytes() == path.read_bytes()


def test_report(tasks_dir, tmp_path):
    run = tmp_path / "run"
    _optimize(tasks_dir, run)
    log = run / "trajectories.jsonl"
    one = tmp_path / "one.jsonl"
    first_task = json.loads(log.read_text().splitlines()[0])["task_id"]
    one.write_text("".join(l + "\n" for l in log.read_text().splitlines() if json.loads(l)["task_id"] == first_task))
    out = tmp_path / "rep"
    assert main(["report", "--log", str(one), "--out", str(out), "--fastp", "1,1.5,2"]) == 0
    summary = [l for l in (out / "summary.csv").read_text().splitlines() if not l.startswith("#")]
    assert len(summary) == 2
    assert (out / "fastp.csv").read_text().count("\n") == 4
    assert (out / "fastp.svg").read_text().startswith("<svg")
    again = tmp_path / "rep2"
    main(["report", "--log", str(one), "--out", str(again), "--fastp", "1,1.5,2"])
    assert _tree(out) == _tree(again)
    assert main(["report", "--log", str(one), "--out", str(out), "--fastp", "2,1"]) == 1
    empty_log = tmp_path / "empty.jsonl"
    empty_log.write_text("")
    assert main(["report", "--log", str(empty_log), "--out", str(out)]) == 1
