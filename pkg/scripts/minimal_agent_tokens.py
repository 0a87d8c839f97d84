"""Token use and speedup per token: the knowledge-base loop versus a memory-less agent.

Both sides get one pass of 10 trajectories of length 10 per task.
Tokens are whitespace counts from the simulated agent.
"""

import math
from statistics import fmean

from _common import dump, parser

from kernelblaze import experiments as ex


def main():
    args = parser(__doc__).parse_args()
    tasks = ex.batch(range(args.seeds))
    ours = ex.run_batch(tasks, run_seed=args.run_seed, iterations=1, trajectories_per_task=10, rollout_steps=10)
    minimal = ex.run_minimal_agent(tasks, trajectories=10, steps=10, seed=args.run_seed)
    m_speed = [minimal.best[t.task_id] for t in tasks]
    m_geo = math.exp(fmean(math.log(s) for s in m_speed))
    ours_tokens = ex.loop_tokens(ours)
    wins = sum(a > b for a, b in zip(ours.speedups, m_speed))
    print(f"{'agent':<10} {'tokens':>10} {'geomean':>8} {'geomean/Mtok':>13}")
    print(f"{'kb-loop':<10} {ours_tokens:>10} {ours.geomean:8.3f} {ours.geomean / ours_tokens * 1e6:13.3f}")
    print(f"{'minimal':<10} {minimal.tokens:>10} {m_geo:8.3f} {m_geo / minimal.tokens * 1e6:13.3f}")
    print(f"token ratio minimal/kb-loop {minimal.tokens / ours_tokens:.2f}; kb-loop better on {wins}/{len(tasks)} tasks")
    dump(args.out, {"kb_loop": {"tokens": ours_tokens, "speedups": ours.speedups}, "minimal": {"tokens": minimal.tokens, "speedups": m_speed}})


if __name__ == "__main__":
    main()
