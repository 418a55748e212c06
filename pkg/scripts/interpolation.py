"""Batch means of shift-interpolated samples over a lambda sweep.

Uses the exact mixture oracle by default or a trained shift-mode checkpoint.

    python scripts/interpolation.py [--mode quadratic_shift] [--checkpoint path] --out interp.csv
"""

import argparse

import numpy as np

from shiftdiff.config import Config
from shiftdiff.datasets import write_table
from shiftdiff.oracle import OracleDenoiser
from shiftdiff.sampler import sample_interpolated
from shiftdiff.schedules import build_shift_schedule
from shiftdiff.shift_predictor import PredictorKind, ShiftPredictor
from shiftdiff.trainer import load_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", default="quadratic_shift")
    ap.add_argument("--checkpoint")
    ap.add_argument("--count", type=int, default=4000)
    ap.add_argument("--out", default="interpolation.csv")
    args = ap.parse_args()
    if args.checkpoint:
        state = load_state(args.checkpoint)
        model, pred, shift, sched = state.ema_net(), state.ema_predictor(), state.shift, state.schedule
    else:
        cfg = Config().with_overrides(shift__mode=args.mode)
        sched, gmm = cfg.noise_schedule(), cfg.gmm()
        shift = build_shift_schedule(args.mode, sched)
        pred = ShiftPredictor(PredictorKind.CLASS_MEAN, gmm.class_means(), np.zeros(gmm.dim))
        model = OracleDenoiser(gmm, sched, shift, pred, conditional=False)
    rows = []
    for lam in np.linspace(0.0, 1.0, 11):
        x = sample_interpolated(model, pred, shift, sched, 0, 1, float(lam), args.count, np.random.default_rng(0))
        rows.append((round(float(lam), 2), *x.mean(0)))
        print(f"lambda {lam:.1f}: mean {np.round(x.mean(0), 3)}")
    write_table(args.out, ["lambda", "mean_x", "mean_y"], rows)


if __name__ == "__main__":
    main()
