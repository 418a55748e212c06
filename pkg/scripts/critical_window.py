"""Mixed unconditional/conditional sampling: accuracy of every (t1, t2] window on a grid.

Uses two plain (unshifted) models, either exact mixture oracles (``--oracle``)
or networks trained for ``--steps`` updates.  Writes the full accuracy grid and
one trajectory trace for the selected window.

    python scripts/critical_window.py --out runs/window [--oracle] [--stride 10]
"""

import argparse
from pathlib import Path

import numpy as np

from shiftdiff.config import Config
from shiftdiff.datasets import write_table
from shiftdiff.oracle import OracleDenoiser
from shiftdiff.sampler import CriticalWindow, grid_search_window, mixed_accuracy, sample_mixed
from shiftdiff.schedules import build_shift_schedule
from shiftdiff.trainer import train


def plain_models(args):
    if args.oracle:
        cfg = Config().with_overrides(shift__mode="none")
        sched = cfg.noise_schedule()
        shift = build_shift_schedule("none", sched)
        gmm = cfg.gmm()
        return (OracleDenoiser(gmm, sched, shift, conditional=False),
                OracleDenoiser(gmm, sched, shift, conditional=True), sched, gmm)
    nets = []
    for flag in ("false", "true"):
        cfg = Config().with_overrides(shift__mode="none", model__conditional=flag, train__steps=args.steps)
        state = train(cfg)
        net = state.ema_net()
        net.schedule, net.shift = state.schedule, state.shift
        nets.append(net)
    return nets[0], nets[1], state.schedule, state.gmm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/window")
    ap.add_argument("--oracle", action="store_true")
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--stride", type=int, default=10)
    ap.add_argument("--threshold", type=float, default=0.9)
    ap.add_argument("--count", type=int, default=500)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    uncond, cond, sched, gmm = plain_models(args)

    grid = list(range(0, sched.T + 1, args.stride))
    rows = []
    for i, a in enumerate(grid):
        for b in grid[i:]:
            acc = mixed_accuracy(uncond, cond, sched, gmm, CriticalWindow(a, b), args.count, 0)
            rows.append((a, b, acc))
    write_table(out / "window_accuracy.csv", ["t1", "t2", "accuracy"], rows)

    window = grid_search_window(uncond, cond, sched, gmm, args.stride, args.threshold, args.count)
    if window is None:
        print("no window reaches the threshold")
        return
    w = window.width
    early = mixed_accuracy(uncond, cond, sched, gmm, CriticalWindow(0, w), args.count, 1)
    late = mixed_accuracy(uncond, cond, sched, gmm, CriticalWindow(sched.T - w, sched.T), args.count, 1)
    print(f"shortest window ({window.t1}, {window.t2}]; early (0, {w}] {early:.3f}; "
          f"late ({sched.T - w}, {sched.T}] {late:.3f}")
    trace = []
    sample_mixed(uncond, cond, sched, 0, window, 64, np.random.default_rng(0), trace=trace)
    write_table(out / "trace.csv", ["t", "chain", "x0", "x1"],
                ((t, i, *row) for t, x in trace for i, row in enumerate(x)))


if __name__ == "__main__":
    main()
