"""Pipeline attempts to reach 90% of optimal on fresh tasks, with a trained versus an empty KB."""

import statistics

from _common import dump, parser

from kernelblaze import experiments as ex
from kernelblaze import knowledge_base as kbm


def main():
    p = parser(__doc__)
    p.add_argument("--save-kb", help="write the trained knowledge base here")
    args = p.parse_args()
    trained = ex.run_batch(ex.batch(range(args.seeds)), run_seed=args.run_seed).result.kb
    if args.save_kb:
        kbm.save(trained, args.save_kb)
    fresh = ex.batch(ex.FRESH_SEEDS)
    with_kb = ex.run_batch(fresh, kb=trained, run_seed=args.run_seed).attempts_to(0.9)
    empty = ex.run_batch(fresh, run_seed=args.run_seed).attempts_to(0.9)
    print(f"{'task':<10} {'trained':>8} {'empty':>8}")
    for t, a, b in zip(fresh, with_kb, empty):
        print(f"{t.task_id:<10} {a:8g} {b:8g}")
    m1, m0 = statistics.median(with_kb), statistics.median(empty)
    print(f"median attempts: trained {m1:g}, empty {m0:g}")
    dump(args.out, {"trained": with_kb, "empty": empty, "median_trained": m1, "median_empty": m0})


if __name__ == "__main__":
    main()
