"""Full loop versus a loop whose knowledge base is reset at every iteration."""

from _common import dump, parser

from kernelblaze import experiments as ex


def main():
    args = parser(__doc__).parse_args()
    tasks = ex.batch(range(args.seeds))
    full = ex.run_batch(tasks, run_seed=args.run_seed)
    reset = ex.run_batch(tasks, run_seed=args.run_seed, reset_kb_each_iteration=True)
    print(f"{'variant':<12} {'mean':>7} {'geomean':>8} {'>=90% opt':>10}")
    rows = {}
    for name, run in (("full", full), ("no-memory", reset)):
        share = sum(r >= 0.9 for r in run.optimality()) / len(tasks)
        rows[name] = {"mean": run.mean, "geomean": run.geomean, "share_90": share}
        print(f"{name:<12} {run.mean:7.3f} {run.geomean:8.3f} {share:10.0%}")
    print(f"full / no-memory geomean: {full.geomean / reset.geomean:.3f}")
    dump(args.out, rows)


if __name__ == "__main__":
    main()
