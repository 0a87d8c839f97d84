"""Mean best speedup as the trajectory count and the rollout depth grow."""

from _common import dump, parser

from kernelblaze import experiments as ex


def main():
    p = parser(__doc__)
    p.add_argument("--run-seeds", type=int, default=5, help="pool results over run seeds 0..N-1")
    args = p.parse_args()
    tasks = ex.batch(range(args.seeds))
    seeds = range(args.run_seeds)
    trajectories = ex.sweep(tasks, "trajectories_per_task", (1, 2, 4, 8, 16), seeds)
    depth = ex.sweep(tasks, "rollout_steps", (1, 2, 4, 8), seeds)
    for name, means, early, late in (("trajectories", trajectories, (2, 4), (8, 16)), ("depth", depth, (2, 4), (4, 8))):
        ok, ratio = ex.diminishing(means, early, late)
        print(f"{name}: " + "  ".join(f"{k}={v:.3f}" for k, v in means.items()) + f"  gain ratio {ratio:.3f}")
    dump(args.out, {"trajectories": trajectories, "depth": depth})


if __name__ == "__main__":
    main()
