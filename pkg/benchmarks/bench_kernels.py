"""Time each compiled kernel against its numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats N] [--json]
"""

import argparse
import json

from unict_depth.kernel_bench import format_rows, run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--json", action="store_true")
    args = p.parse_args()
    rows = run(repeats=args.repeats)
    print(json.dumps(rows, indent=2) if args.json else format_rows(rows))


if __name__ == "__main__":
    main()
