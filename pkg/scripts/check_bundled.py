"""Run `ncspec check` on every bundled scenario and summarize exit codes.

    python3 scripts/check_bundled.py --skip theta-decay
"""
import argparse
import time

from ncspec.cli import main as cli_main
from ncspec.scenario import BUNDLED


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/check")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--skip", nargs="*", default=[])
    args = ap.parse_args()

    summary = []
    for name in BUNDLED:
        if name in args.skip:
            continue
        print(f"== {name}")
        t0 = time.perf_counter()
        code = cli_main(["check", "--scenario", name, "--out", f"{args.out}/{name}", "--threads", str(args.threads)])
        summary.append((name, code, time.perf_counter() - t0))
    print()
    for name, code, secs in summary:
        print(f"{name:26s} exit {code}  {secs:6.1f} s")
    raise SystemExit(max((c for _, c, _ in summary), default=0))


if __name__ == "__main__":
    main()
