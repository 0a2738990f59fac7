"""Fit the frozen inequality constants and write src/rstokes/data/constants.txt.

Run once; the output is committed and never refitted by the checks.

    python3 scripts/calibrate_constants.py [--out PATH] [--quick]
"""
import argparse
import sys
import time
from pathlib import Path

from rstokes import calibration as cal
from rstokes.constants import format_constants

HEADER = """Frozen constants: 1.25 x empirical supremum on the calibration grid.
kernel bounds: alpha 0.1..0.9, gamma {0.5, 1, 2}, lambda 1..1e6 (decades),
12 log-spaced t in [1e-4, 1], T = 1; derivatives by central differences with
h = max(1e-6, 1e-3 t) for t >= 1e-3.
coercive: same (alpha, gamma) grid, explicit spectrum lambda = 1..1e6 (decades),
64-node geometric time grid; source profiles one, ramp, quadratic.
Keys with @eps are valid for every smoothness index >= eps when lambda_1 >= 1.
Generated by scripts/calibrate_constants.py"""


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    default = Path(__file__).resolve().parents[1] / "src" / "rstokes" / "data" / "constants.txt"
    ap.add_argument("--out", type=Path, default=default)
    ap.add_argument("--quick", action="store_true", help="alpha in {0.3, 0.5, 0.7} only (smoke run)")
    args = ap.parse_args(argv)
    alphas = (0.3, 0.5, 0.7) if args.quick else cal.ALPHAS

    t0 = time.time()
    consts = cal.fit_kernel_constants(cal.iter_kernel_grid(alphas=alphas))
    print(f"kernel constants in {time.time() - t0:.1f}s", file=sys.stderr)
    t0 = time.time()
    consts.update(cal.fit_coercive_constants(alphas=alphas))
    print(f"coercive constants in {time.time() - t0:.1f}s", file=sys.stderr)
    consts = {k: float(v) for k, v in consts.items()}
    args.out.write_text(format_constants(consts, HEADER))
    for k in sorted(consts):
        print(f"{k} = {consts[k]:.6g}")


if __name__ == "__main__":
    main()
