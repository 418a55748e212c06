"""Training loop: simplified objective on shifted forward samples."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .config import Config, format_config, parse_config
from .datasets import load_dataset
from .net import MlpDenoiser, OptimizerState, init_mlp, loss_and_grads, optimizer_step
from .oracle import GmmSpec
from .schedules import NoiseSchedule, ShiftSchedule, build_shift_schedule, schedule_from_betas
from .shift_predictor import (PredictorKind, ShiftPredictor, class_mean, fixed_table, shift_grads,
                              trainable)

RNG_ALGORITHM = "numpy.random.Philox (4x64, 10 rounds) seeded via SeedSequence(seed).spawn(3)"


def make_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (data, init, train) generators split from one seed."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(c)) for c in children)


@dataclass(eq=False)
class TrainState:
    config: Config
    schedule: NoiseSchedule
    shift: ShiftSchedule
    net: MlpDenoiser
    predictor: ShiftPredictor
    opt: OptimizerState
    data: np.ndarray
    labels: np.ndarray
    rng: np.random.Generator
    step: int = 0
    gmm: GmmSpec | None = None
    sigma_diag: np.ndarray | None = None

    def params(self) -> dict[str, np.ndarray]:
        return {**self.net.params, **self.predictor.params()}

    def ema_net(self) -> MlpDenoiser:
        return self.net.with_params(self.opt.ema)

    def ema_predictor(self) -> ShiftPredictor:
        if not self.predictor.trainable:
            return self.predictor
        return ShiftPredictor(self.predictor.kind, self.opt.ema["predictor.weight"].copy(),
                              self.opt.ema["predictor.bias"].copy())


def build_predictor(config: Config, data, labels, num_classes: int, rng) -> ShiftPredictor:
    kind = config.predictor_kind
    dim = data.shape[1]
    if kind is PredictorKind.FIXED_TABLE:
        return fixed_table(num_classes, dim)
    if kind is PredictorKind.CLASS_MEAN:
        return class_mean(data, labels, num_classes)
    return trainable(num_classes, dim, rng, config.shift.predictor_init)


def init_state(config: Config) -> TrainState:
    config.validate()
    data_rng, init_rng, train_rng = make_streams(config.train.seed)
    data, labels, num_classes, gmm = load_dataset(config, data_rng)
    schedule = config.noise_schedule()
    shift = build_shift_schedule(config.shift_mode, schedule)
    predictor = build_predictor(config, data, labels, num_classes, init_rng)
    net = init_mlp(data.shape[1], init_rng, hidden=config.model.hidden, depth=config.model.depth,
                   time_dim=config.model.time_dim, num_classes=num_classes,
                   conditional=config.conditional_net)
    state = TrainState(config, schedule, shift, net, predictor, None, data, labels, train_rng,
                       gmm=gmm, sigma_diag=config.sigma_diag(data.shape[1]))
    state.opt = OptimizerState.for_params(state.params(), lr=config.train.lr, beta1=config.train.beta1,
                                          beta2=config.train.beta2, ema_decay=config.train.ema)
    return state


def objective(state: TrainState, x0: np.ndarray, cond: np.ndarray, t: np.ndarray, eps: np.ndarray):
    """Training loss on fixed draws and its gradient for every trainable parameter."""
    sched, shift = state.schedule, state.shift
    e = state.predictor(cond)
    k = shift.k[t][:, None]
    s_t = k * e
    ab = sched.alpha_bar[t][:, None]
    root_ab, root_1mab = np.sqrt(ab), np.sqrt(1.0 - ab)
    x_t = root_ab * x0 + s_t + root_1mab * eps
    target = (x_t - root_ab * x0) / root_1mab
    net_cond = cond if state.net.conditional else None
    loss, grads, grad_x, grad_target = loss_and_grads(state.net, x_t, t, target, net_cond, state.sigma_diag)
    if state.predictor.trainable:
        # s_t enters through the network input and through the target
        grad_e = k * grad_x + (k / root_1mab) * grad_target
        grads.update(shift_grads(state.predictor, cond, grad_e))
    return loss, grads


def train_step(state: TrainState, x0: np.ndarray, cond: np.ndarray) -> float:
    """One update on a batch of (x0, class id); mutates the state and returns the loss."""
    rng = state.rng
    n, d = x0.shape
    t = rng.integers(1, state.schedule.T + 1, size=n)
    eps = rng.standard_normal((n, d))
    if state.sigma_diag is not None:
        eps = eps * np.sqrt(state.sigma_diag)
    loss, grads = objective(state, x0, cond, t, eps)
    optimizer_step(state.opt, state.params(), grads)
    state.step += 1
    return loss


def draw_batch(state: TrainState) -> tuple[np.ndarray, np.ndarray]:
    idx = state.rng.integers(0, len(state.data), size=state.config.train.batch)
    return state.data[idx], state.labels[idx]


def _rng_state(rng: np.random.Generator) -> dict:
    st = rng.bit_generator.state
    return {
        "bit_generator": st["bit_generator"],
        "counter": [int(v) for v in st["state"]["counter"]],
        "key": [int(v) for v in st["state"]["key"]],
        "buffer": [int(v) for v in st["buffer"]],
        "buffer_pos": int(st["buffer_pos"]),
        "has_uint32": int(st["has_uint32"]),
        "uinteger": int(st["uinteger"]),
    }


def _restore_rng(meta: dict) -> np.random.Generator:
    bg = np.random.Philox()
    bg.state = {
        "bit_generator": meta["bit_generator"],
        "state": {"counter": np.array(meta["counter"], dtype=np.uint64),
                  "key": np.array(meta["key"], dtype=np.uint64)},
        "buffer": np.array(meta["buffer"], dtype=np.uint64),
        "buffer_pos": meta["buffer_pos"],
        "has_uint32": meta["has_uint32"],
        "uinteger": meta["uinteger"],
    }
    return np.random.Generator(bg)


def state_to_checkpoint(state: TrainState) -> tuple[dict, dict[str, np.ndarray]]:
    opt = state.opt
    meta = {
        "config": format_config(state.config),
        "step": state.step,
        "seed": state.config.train.seed,
        "schedule": {"T": state.schedule.T, "beta": state.schedule.beta[1:].tolist(),
                     "alpha_bar": state.schedule.alpha_bar.tolist()},
        "shift": {"mode": state.shift.mode.value, "k": state.shift.k.tolist(),
                  "predictor": state.predictor.kind.value},
        "net": {"data_dim": state.net.data_dim, "hidden": state.net.hidden, "depth": state.net.depth,
                "time_dim": state.net.time_dim, "num_classes": state.net.num_classes,
                "conditional": state.net.conditional},
        "optimizer": {"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
                      "ema_decay": opt.ema_decay, "step": opt.step},
        "rng": {"algorithm": RNG_ALGORITHM, "train_stream": _rng_state(state.rng)},
    }
    tensors = dict(state.net.params)
    tensors["predictor.weight"] = state.predictor.weight
    tensors["predictor.bias"] = state.predictor.bias
    for name in opt.m:
        tensors[f"adam.m.{name}"] = opt.m[name]
        tensors[f"adam.v.{name}"] = opt.v[name]
        tensors[f"ema.{name}"] = opt.ema[name]
    return meta, tensors


def state_from_checkpoint(meta: dict, tensors: dict[str, np.ndarray]) -> TrainState:
    config = parse_config(meta["config"]).validate()
    data_rng, _, _ = make_streams(config.train.seed)
    data, labels, num_classes, gmm = load_dataset(config, data_rng)
    schedule = schedule_from_betas(meta["schedule"]["beta"])
    shift = ShiftSchedule(build_shift_schedule(meta["shift"]["mode"], schedule).mode,
                          np.array(meta["shift"]["k"], dtype=np.float64))
    shift.k.setflags(write=False)
    arch = meta["net"]
    net = MlpDenoiser(arch["data_dim"], arch["hidden"], arch["depth"], arch["time_dim"],
                      arch["num_classes"], arch["conditional"],
                      {k: v for k, v in tensors.items() if k.startswith("net.")})
    predictor = ShiftPredictor(PredictorKind.parse(meta["shift"]["predictor"]),
                               tensors["predictor.weight"], tensors["predictor.bias"])
    o = meta["optimizer"]
    opt = OptimizerState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"],
                         ema_decay=o["ema_decay"], step=o["step"])
    for name in [*net.params, *predictor.params()]:
        opt.m[name] = tensors[f"adam.m.{name}"]
        opt.v[name] = tensors[f"adam.v.{name}"]
        opt.ema[name] = tensors[f"ema.{name}"]
    return TrainState(config, schedule, shift, net, predictor, opt, data, labels,
                      _restore_rng(meta["rng"]["train_stream"]), step=meta["step"], gmm=gmm,
                      sigma_diag=config.sigma_diag(data.shape[1]))


def save_state(state: TrainState, path) -> None:
    ckpt.save_checkpoint(path, *state_to_checkpoint(state))


def load_state(path) -> TrainState:
    return state_from_checkpoint(*ckpt.load_checkpoint(path))


def train(config: Config, state: TrainState | None = None, steps: int | None = None,
          log=None) -> TrainState:
    """Run ``steps`` (default ``config.train.steps``) updates, writing metrics and checkpoints.

    Metrics lines are ``step,loss,wall_ms``; with ``output.wall_clock = false``
    the wall time column is written as 0 so reruns are byte-identical.
    """
    state = init_state(config) if state is None else state
    steps = config.train.steps if steps is None else steps
    out = config.output
    metrics = None
    if out.metrics:
        try:
            metrics = open(out.metrics, "a" if state.step else "w", encoding="utf-8")
        except OSError as err:
            raise OSError(f"cannot open metrics file {out.metrics}: {err.strerror}") from err
        if not state.step:
            metrics.write("step,loss,wall_ms\n")
    try:
        start = time.perf_counter()
        for _ in range(steps):
            x0, cond = draw_batch(state)
            loss = train_step(state, x0, cond)
            if metrics is not None:
                wall = (time.perf_counter() - start) * 1e3 if out.wall_clock else 0.0
                metrics.write(f"{state.step},{loss!r},{wall:.3f}\n")
            if log is not None:
                log(state.step, loss)
            every = config.train.checkpoint_every
            if out.checkpoint and every and state.step % every == 0:
                save_state(state, _periodic_path(out.checkpoint, state.step))
    finally:
        if metrics is not None:
            metrics.close()
    if out.checkpoint:
        save_state(state, out.checkpoint)
    return state


def _periodic_path(path: str, step: int) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}.{step:08d}{p.suffix}")


def target_variance(schedule: NoiseSchedule, t: int, data_var: float, sigma: float = 1.0) -> float:
    """Var[g-target | x_t] per coordinate for single-Gaussian data with variance ``data_var``.

    The irreducible loss floor of an oracle-initialized network at ``t``.
    """
    ab = schedule.alpha_bar[t]
    post_var_x0 = data_var * (1.0 - ab) * sigma / (ab * data_var + (1.0 - ab) * sigma)
    return ab * post_var_x0 / (1.0 - ab)
