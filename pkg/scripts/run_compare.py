"""KL vs regression localization on synthetic targets; prints the summary and angle table."""
import argparse

from gpnloc.cli import ANGLE_KEYS, SUMMARY_KEYS, compare_tables, run_compare


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--lr", type=float, default=0.1)
    ap.add_argument("--max-iters", type=int, default=500)
    ap.add_argument("--space", choices=("raw", "anchor_encoded"), default="anchor_encoded")
    args = ap.parse_args()

    report = run_compare(args.n, args.seed, args.workers, args.lr, args.max_iters, args.space)
    summary, angles = compare_tables(report)
    for keys, rows in ((SUMMARY_KEYS, summary), (ANGLE_KEYS, angles)):
        print("  ".join(f"{k:>22}" for k in keys))
        for r in rows:
            print("  ".join(f"{v:>22.4g}" if isinstance(v, float) else f"{v!s:>22}" for v in r))
        print()


if __name__ == "__main__":
    main()
