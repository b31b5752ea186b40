"""m3sda target accuracy on the toy task across trade-off weights.

    python scripts/lambda_sweep.py --seeds 5 --lambdas 0,0.1,0.5,1,2
"""

import argparse

import numpy as np

from m3sda.experiments import ToySetup, run_toy


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--lambdas", default="0.1,0.5,1.0")
    ns = ap.parse_args()

    setup = ToySetup()
    meds = {}
    for lam in (float(x) for x in ns.lambdas.split(",")):
        acc = [run_toy(setup, "m3sda", s, lam).accuracy for s in range(ns.seeds)]
        meds[lam] = float(np.median(acc))
        print(f"lambda={lam:<6g} median {meds[lam]:.3f}   " + " ".join(f"{x:.2f}" for x in acc))
    print(f"spread {100 * (max(meds.values()) - min(meds.values())):.1f} points")


if __name__ == "__main__":
    main()
