"""Gaussian-mixture data and the closed-form optimal denoiser.

For mixture data the shifted forward marginal of every component stays
Gaussian, so ``E[x0 | x_t, c]`` and therefore the optimal ``g`` are available
exactly.  This gives a training-free model for checking the reverse process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .schedules import NoiseSchedule, ShiftSchedule
from .shift_predictor import ShiftPredictor


@dataclass
class ClassMixture:
    means: np.ndarray  # (K, d)
    variances: np.ndarray  # (K,) isotropic
    weights: np.ndarray  # (K,)

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.variances = np.atleast_1d(np.asarray(self.variances, dtype=np.float64))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        k = self.means.shape[0]
        if self.variances.shape != (k,) or self.weights.shape != (k,):
            raise ValueError("means, variances and weights disagree on component count")
        if np.any(self.variances < 0):
            raise ValueError("component variances must be non-negative")
        if not math.isclose(self.weights.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"class weights sum to {self.weights.sum()}, not 1")


@dataclass
class GmmSpec:
    classes: list[ClassMixture]
    class_weights: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if not self.classes:
            raise ValueError("need at least one class")
        if self.class_weights is None:
            self.class_weights = np.full(len(self.classes), 1.0 / len(self.classes))
        self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
        dims = {c.means.shape[1] for c in self.classes}
        if len(dims) != 1:
            raise ValueError(f"classes disagree on dimension: {sorted(dims)}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def dim(self) -> int:
        return self.classes[0].means.shape[1]

    def class_means(self) -> np.ndarray:
        return np.stack([c.weights @ c.means for c in self.classes])

    @classmethod
    def isotropic(cls, means, variance: float) -> "GmmSpec":
        """One Gaussian component per class."""
        return cls([ClassMixture(np.asarray(m, dtype=np.float64)[None], [variance], [1.0]) for m in means])


def default_gmm() -> GmmSpec:
    return GmmSpec.isotropic([[2.0, 2.0], [-2.0, -2.0]], 0.1)


def gmm_sample(spec: GmmSpec, class_id: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= class_id < spec.num_classes:
        raise ValueError(f"invalid class {class_id} for {spec.num_classes} classes")
    mix = spec.classes[class_id]
    comp = rng.choice(len(mix.weights), size=count, p=mix.weights)
    noise = rng.standard_normal((count, spec.dim))
    return mix.means[comp] + np.sqrt(mix.variances[comp])[:, None] * noise


def gmm_dataset(spec: GmmSpec, per_class: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    xs = [gmm_sample(spec, c, per_class, rng) for c in range(spec.num_classes)]
    labels = np.repeat(np.arange(spec.num_classes), per_class)
    return np.concatenate(xs), labels


@dataclass(eq=False)
class OracleDenoiser:
    """Bayes-optimal ``g`` for GMM data under a given shifted forward process.

    With ``conditional=True`` the class id is an input (the cond-DDPM style
    target); otherwise the class is marginalized out, with each class diffusing
    along its own shifted trajectory, which is what an unconditional network
    trained on shifted data converges to.
    """

    gmm: GmmSpec
    schedule: NoiseSchedule
    shift: ShiftSchedule
    predictor: ShiftPredictor | None = None
    conditional: bool = True
    sigma_diag: np.ndarray | None = None

    def class_shift_vectors(self) -> np.ndarray:
        if self.predictor is None:
            return np.zeros((self.gmm.num_classes, self.gmm.dim))
        return self.predictor(np.arange(self.gmm.num_classes))

    def posterior_x0(self, x_t, t: int, class_id=None, shift_vectors=None) -> np.ndarray:
        return oracle_posterior_x0(self, x_t, t, class_id, shift_vectors)

    def __call__(self, x_t, t: int, condition=None) -> np.ndarray:
        return oracle_g(self, x_t, t, condition if self.conditional else None)


def oracle_posterior_x0(denoiser: OracleDenoiser, x_t, t: int, class_id=None, shift_vectors=None) -> np.ndarray:
    """E[x0 | x_t] (``class_id`` given) or E[x0 | x_t] over all classes (``class_id=None``).

    ``shift_vectors`` overrides E(c) per class, shape (C, d).
    """
    gmm, sched = denoiser.gmm, denoiser.schedule
    x = np.asarray(x_t, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n, d = x.shape
    t = sched.check_t(t)
    ab = sched.alpha_bar[t]
    if t == 0:
        return x[0].copy() if single else x.copy()
    sigma = np.ones(d) if denoiser.sigma_diag is None else np.asarray(denoiser.sigma_diag, dtype=np.float64)
    e = denoiser.class_shift_vectors() if shift_vectors is None else np.asarray(shift_vectors, dtype=np.float64)
    s = denoiser.shift.k[t] * e  # (C, d)
    rab = math.sqrt(ab)

    if class_id is None:
        allowed = np.ones((n, gmm.num_classes), dtype=bool)
    else:
        cid = np.broadcast_to(np.asarray(class_id), (n,))
        if np.any(cid < 0) or np.any(cid >= gmm.num_classes):
            raise ValueError(f"invalid class id for {gmm.num_classes} classes")
        allowed = cid[:, None] == np.arange(gmm.num_classes)[None, :]

    log_w, cond_means = [], []
    for c, mix in enumerate(gmm.classes):
        v = mix.variances[:, None]  # (K, 1)
        var = ab * v + (1.0 - ab) * sigma[None, :]  # (K, d)
        resid = x[:, None, :] - s[c][None, None, :] - rab * mix.means[None, :, :]  # (N, K, d)
        logp = -0.5 * np.sum(resid * resid / var + np.log(2 * math.pi * var), axis=-1)
        prior = math.log(gmm.class_weights[c]) if class_id is None else 0.0
        with np.errstate(divide="ignore"):
            lw = logp + np.log(mix.weights)[None, :] + prior
        log_w.append(np.where(allowed[:, c:c + 1], lw, -np.inf))
        cond_means.append(mix.means[None] + rab * v[None] * resid / var[None])
    log_w = np.concatenate(log_w, axis=1)  # (N, sum K)
    cond_means = np.concatenate(cond_means, axis=1)  # (N, sum K, d)
    resp = np.exp(log_w - logsumexp(log_w, axis=1, keepdims=True))
    out = np.einsum("nk,nkd->nd", resp, cond_means)
    return out[0] if single else out


def oracle_g(denoiser: OracleDenoiser, x_t, t: int, class_id=None, shift_vectors=None) -> np.ndarray:
    t = denoiser.schedule.check_t(t, lo=1)
    ab = denoiser.schedule.alpha_bar[t]
    x0 = oracle_posterior_x0(denoiser, x_t, t, class_id, shift_vectors)
    return (np.asarray(x_t, dtype=np.float64) - math.sqrt(ab) * x0) / math.sqrt(1.0 - ab)
