"""Full profiles versus profiles reduced to elapsed cycles."""

from _common import dump, parser

from kernelblaze import experiments as ex


def main():
    args = parser(__doc__).parse_args()
    tasks = ex.batch(range(args.seeds))
    full = ex.run_batch(tasks, run_seed=args.run_seed)
    cycles = ex.run_cycles_only(tasks, run_seed=args.run_seed)
    wins = sum(a > b for a, b in zip(full.speedups, cycles.speedups))
    print(f"{'task':<10} {'full':>7} {'cycles':>7}")
    for t, a, b in zip(tasks, full.speedups, cycles.speedups):
        print(f"{t.task_id:<10} {a:7.3f} {b:7.3f}")
    print(f"geomean full {full.geomean:.3f}, cycles-only {cycles.geomean:.3f}; full better on {wins}/{len(tasks)} tasks")
    dump(args.out, {"full": full.speedups, "cycles_only": cycles.speedups})


if __name__ == "__main__":
    main()
