"""Per-epoch moment discrepancy and target accuracy of m3sda on the toy task.

    python scripts/convergence.py --seeds 10 --every 10
"""

import argparse

import numpy as np

from m3sda.experiments import ToySetup, run_toy


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--lam", type=float, default=0.5)
    ap.add_argument("--every", type=int, default=10)
    ns = ap.parse_args()

    runs = [run_toy(ToySetup(), "m3sda", s, ns.lam) for s in range(ns.seeds)]
    md = np.array([r.md for r in runs])
    acc = np.array([r.target_acc for r in runs])
    ratio = md / md[:, :1]
    print(f"{'epoch':>5}{'median MD':>12}{'max MD/MD0':>12}{'median acc':>12}")
    epochs = sorted(set(range(0, md.shape[1], ns.every)) | {md.shape[1] - 1})
    for e in epochs:
        print(f"{e:5d}{np.median(md[:, e]):12.4f}{ratio[:, e].max():12.3f}{np.median(acc[:, e]):12.3f}")
    print(f"final MD below half of epoch 0 on {(ratio[:, -1] < 0.5).sum()}/{len(runs)} seeds")


if __name__ == "__main__":
    main()
