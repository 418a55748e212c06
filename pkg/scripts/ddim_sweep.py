"""Conditional accuracy of implicit sampling against the number of steps S.

    python scripts/ddim_sweep.py --checkpoint runs/gmm/quadratic_shift.sdpm --out runs/ddim.csv
"""

import argparse

import numpy as np

from shiftdiff.datasets import write_table
from shiftdiff.evaluation import conditional_accuracy
from shiftdiff.sampler import ddim_subsequence, sample_ancestral, sample_ddim
from shiftdiff.trainer import load_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--out", default="ddim_sweep.csv")
    ap.add_argument("--count", type=int, default=5000)
    ap.add_argument("--eta", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    args = ap.parse_args()
    state = load_state(args.checkpoint)
    net, pred, T = state.ema_net(), state.ema_predictor(), state.schedule.T
    rows = []
    for c in range(state.gmm.num_classes):
        x = sample_ancestral(net, pred, state.shift, state.schedule, c, args.count, np.random.default_rng(c))
        rows.append(("ancestral", T, "", c, conditional_accuracy(x, state.gmm, c)))
        for steps in (T // 20, T // 10, T // 5, T // 2, T):
            tau = ddim_subsequence(T, steps)
            for eta in args.eta:
                x = sample_ddim(net, pred, state.shift, state.schedule, c, tau, eta, args.count,
                                np.random.default_rng(c))
                rows.append(("ddim", len(tau), eta, c, conditional_accuracy(x, state.gmm, c)))
    for row in rows:
        print(*row)
    write_table(args.out, ["sampler", "steps", "eta", "class", "accuracy"], rows)


if __name__ == "__main__":
    main()
