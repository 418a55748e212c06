"""Command-line entry point: ``shiftdiff <command> [flags]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .checkpoint import CheckpointError
from .config import Config, load_config
from .datasets import IdxParseError, write_samples, write_table
from .diffusion import ContractError
from .evaluation import conditional_accuracy, variational_bound, verify_derivations
from .oracle import GmmSpec, OracleDenoiser, gmm_sample
from .sampler import (CriticalWindow, ddim_subsequence, grid_search_window, mixed_accuracy, sample_ancestral,
                      sample_ddim, sample_interpolated, sample_mixed)
from .schedules import ConfigurationError, NoiseSchedule, ShiftMode, ShiftSchedule, build_shift_schedule
from .shift_predictor import PredictorKind, ShiftPredictor
from .trainer import load_state, train


@dataclass
class Loaded:
    """A sampling-ready model with everything needed to run it."""

    model: object
    predictor: ShiftPredictor | None
    shift: ShiftSchedule
    schedule: NoiseSchedule
    gmm: GmmSpec | None
    sigma_diag: np.ndarray | None


def sampling_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _oracle(cfg: Config, conditional: bool = True, mode: ShiftMode | None = None) -> Loaded:
    gmm = cfg.gmm()
    schedule = cfg.noise_schedule()
    shift = build_shift_schedule(cfg.shift_mode if mode is None else mode, schedule)
    predictor = ShiftPredictor(PredictorKind.CLASS_MEAN, gmm.class_means(), np.zeros(gmm.dim))
    sigma = cfg.sigma_diag(gmm.dim)
    model = OracleDenoiser(gmm, schedule, shift, predictor, conditional=conditional, sigma_diag=sigma)
    return Loaded(model, predictor, shift, schedule, gmm, sigma)


def _from_checkpoint(path: str) -> Loaded:
    state = load_state(path)
    net = state.ema_net()
    net.schedule, net.shift = state.schedule, state.shift
    return Loaded(net, state.ema_predictor(), state.shift, state.schedule, state.gmm, state.sigma_diag)


def _load(args, which: str = "checkpoint", conditional: bool = True, mode=None) -> Loaded:
    if getattr(args, "oracle", False):
        if not args.config:
            raise ConfigurationError("--oracle needs --config")
        return _oracle(load_config(args.config), conditional, mode)
    path = getattr(args, which.replace("-", "_"))
    if not path:
        raise ConfigurationError(f"--{which} is required unless --oracle is given")
    return _from_checkpoint(path)


def _write(out: str | None, samples: np.ndarray, header: dict) -> None:
    if out:
        write_samples(out, samples, header)


def _trace_rows(trace):
    for t, x in trace:
        for i, row in enumerate(x):
            yield (t, i, *(repr(float(v)) for v in row))


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.steps is not None:
        overrides["train__steps"] = args.steps
    if args.checkpoint:
        overrides["output__checkpoint"] = args.checkpoint
    if args.metrics:
        overrides["output__metrics"] = args.metrics
    if overrides:
        cfg = cfg.with_overrides(**overrides).validate()
    state = train(cfg)
    print(f"trained {state.step} steps; checkpoint: {cfg.output.checkpoint or '(not saved)'}")
    return 0


def cmd_sample(args) -> int:
    m = _load(args)
    rng = sampling_rng(args.seed)
    trace = [] if args.trace else None
    if args.steps_subseq:
        tau = ddim_subsequence(m.schedule.T, args.steps_subseq)
        x = sample_ddim(m.model, m.predictor, m.shift, m.schedule, args.condition, tau, args.eta, args.count, rng,
                        m.sigma_diag)
        plan = f"ddim(S={len(tau)},eta={args.eta!r})"
    else:
        x = sample_ancestral(m.model, m.predictor, m.shift, m.schedule, args.condition, args.count, rng,
                             m.sigma_diag, trace)
        plan = "ancestral"
    _write(args.out, x, {"condition": args.condition, "plan": plan, "count": args.count, "seed": args.seed})
    if trace is not None:
        write_table(args.trace, ["t", "chain"] + [f"x{i}" for i in range(x.shape[1])], _trace_rows(trace))
    if m.gmm is not None:
        print(f"accuracy: {conditional_accuracy(x, m.gmm, args.condition)!r}")
    print(f"samples: {len(x)}")
    return 0


def cmd_eval(args) -> int:
    m = _load(args)
    rng = sampling_rng(args.seed)
    if m.gmm is None:
        raise ConfigurationError("eval needs a mixture dataset")
    x0 = gmm_sample(m.gmm, args.condition, 1, rng)[0]
    report = variational_bound(m.model, m.predictor, m.shift, m.schedule, x0, args.condition, rng,
                               args.mc_per_t, m.sigma_diag)
    x = sample_ancestral(m.model, m.predictor, m.shift, m.schedule, args.condition, args.count, rng, m.sigma_diag)
    sys.stdout.write(report.format())
    print(f"accuracy: {conditional_accuracy(x, m.gmm, args.condition)!r}")
    print(f"sample_mean: {','.join(repr(float(v)) for v in x.mean(axis=0))}")
    if args.out:
        write_table(args.out, ["t", "gamma", "term", "stderr"], report.table())
    return 0


def cmd_verify(args) -> int:
    report = verify_derivations(args.trials, args.seed)
    sys.stdout.write(report.format())
    if not report.passed:
        names = ", ".join(c.name for c in report.failing())
        print(f"failed identities: {names}", file=sys.stderr)
        return 1
    return 0


def _pair(args) -> tuple[Loaded, Loaded]:
    uncond = _load(args, "checkpoint", conditional=False, mode=ShiftMode.NONE)
    cond = _load(args, "cond-checkpoint", conditional=True, mode=ShiftMode.NONE)
    return uncond, cond


def cmd_mixed(args) -> int:
    u, c = _pair(args)
    window = CriticalWindow(args.t1, args.t2)
    trace = [] if args.trace else None
    x = sample_mixed(u.model, c.model, u.schedule, args.condition, window, args.count, sampling_rng(args.seed),
                     u.sigma_diag, trace)
    _write(args.out, x, {"condition": args.condition, "plan": f"mixed({args.t1},{args.t2}]",
                         "count": args.count, "seed": args.seed})
    if trace is not None:
        write_table(args.trace, ["t", "chain"] + [f"x{i}" for i in range(x.shape[1])], _trace_rows(trace))
    if u.gmm is not None:
        print(f"accuracy: {conditional_accuracy(x, u.gmm, args.condition)!r}")
    return 0


def cmd_grid_window(args) -> int:
    u, c = _pair(args)
    stride = args.stride or max(1, u.schedule.T // 20)
    window = grid_search_window(u.model, c.model, u.schedule, u.gmm, stride, args.threshold, args.count, args.seed)
    if window is None:
        print("window: none found")
        return 0
    acc = mixed_accuracy(u.model, c.model, u.schedule, u.gmm, window, args.count, args.seed)
    print(f"window: ({window.t1}, {window.t2}]")
    print(f"accuracy: {acc!r}")
    return 0


def cmd_interpolate(args) -> int:
    m = _load(args, conditional=False)
    x = sample_interpolated(m.model, m.predictor, m.shift, m.schedule, args.c1, args.c2, args.lam, args.count,
                            sampling_rng(args.seed), m.sigma_diag)
    _write(args.out, x, {"c1": args.c1, "c2": args.c2, "lambda": repr(args.lam), "plan": "interpolated",
                         "count": args.count, "seed": args.seed})
    print(f"mean: {','.join(repr(float(v)) for v in x.mean(axis=0))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shiftdiff", description="Shifted-trajectory conditional diffusion.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sampling=True):
        p.add_argument("--config", help="config file (section.key = value lines)")
        p.add_argument("--checkpoint", help="checkpoint written by train")
        p.add_argument("--seed", type=int, default=0)
        if sampling:
            p.add_argument("--oracle", action="store_true", help="use the exact mixture denoiser from --config")
            p.add_argument("--count", type=int, default=1000)
            p.add_argument("--out", help="output file")

    p = sub.add_parser("train", help="train a denoiser")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--metrics")
    p.add_argument("--steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw conditional samples")
    common(p)
    p.add_argument("--condition", type=int, default=0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--steps-subseq", type=int, help="number of implicit steps (omit for ancestral)")
    p.add_argument("--trace", help="write the reverse trajectory as a table")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="variational bound and conditional accuracy")
    common(p)
    p.add_argument("--condition", type=int, default=0)
    p.add_argument("--mc-per-t", type=int, default=64)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="numerically check the closed-form identities")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    for name, func in (("mixed", cmd_mixed), ("grid-window", cmd_grid_window)):
        p = sub.add_parser(name, help="critical-stage sampling with two plain models")
        common(p)
        p.add_argument("--cond-checkpoint", help="conditional model checkpoint")
        if name == "mixed":
            p.add_argument("--condition", type=int, default=0)
            p.add_argument("--t1", type=int, required=True)
            p.add_argument("--t2", type=int, required=True)
            p.add_argument("--trace", help="write the reverse trajectory as a table")
        else:
            p.add_argument("--stride", type=int, help="grid stride (default T/20)")
            p.add_argument("--threshold", type=float, default=0.9)
        p.set_defaults(func=func)

    p = sub.add_parser("interpolate", help="sample along an interpolated shift")
    common(p)
    p.add_argument("--c1", type=int, default=0)
    p.add_argument("--c2", type=int, default=1)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.set_defaults(func=cmd_interpolate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ConfigurationError, ContractError, CheckpointError, IdxParseError, ValueError,
            OSError) as err:
        print(f"shiftdiff {args.command}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
