"""Variational bound, conditional accuracy, and the numerical derivation checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffusion as dc
from .net import weighted_sq_error
from .schedules import (NoiseSchedule, ShiftMode, ShiftSchedule, amendment_term, build_shift_schedule,
                        schedule_from_betas, shift_coefficient)

LN2 = math.log(2.0)


def conditional_accuracy(samples, gmm, claimed_class: int) -> float:
    """Fraction of samples whose nearest class mean is ``claimed_class``."""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("conditional_accuracy needs a non-empty batch")
    means = gmm.class_means()
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=-1)
    return float(np.mean(np.argmin(d2, axis=1) == claimed_class))


def gamma_weight(schedule: NoiseSchedule, t: int) -> float:
    t = schedule.check_t(t, lo=1)
    if t == 1:
        return 1.0 / (2.0 * schedule.alpha[1])
    return schedule.beta[t] / (2.0 * schedule.alpha[t] * (1.0 - schedule.alpha_bar[t - 1]))


def prior_kl(schedule: NoiseSchedule, s_T, x0, sigma_diag=None) -> float:
    """KL[q(x_T | x0, c) || N(s_T, Sigma)]; the shift cancels between the two."""
    x0 = np.asarray(x0, dtype=np.float64)
    np.broadcast_shapes(np.shape(s_T), x0.shape)
    d = x0.shape[-1]
    ab = schedule.alpha_bar[schedule.T]
    mahal = weighted_sq_error(math.sqrt(ab) * x0, sigma_diag)
    return float(0.5 * (-d * math.log1p(-ab) + d * (1.0 - ab) - d + mahal))


def decoder_normalizer(schedule: NoiseSchedule, d: int, sigma_diag=None) -> float:
    """(1/2) log[(2 pi beta_1)^d |Sigma|]."""
    logdet = 0.0 if sigma_diag is None else float(np.sum(np.log(sigma_diag)))
    return 0.5 * (d * math.log(2.0 * math.pi * schedule.beta[1]) + logdet)


@dataclass
class BoundReport:
    gammas: np.ndarray  # gamma_t, index t-1
    terms: np.ndarray  # gamma_t * E||target - g||^2, index t-1
    term_se: np.ndarray  # Monte-Carlo standard error of each term
    decoder_norm: float
    prior: float
    dim: int

    @property
    def decoder(self) -> float:
        return self.decoder_norm + float(self.terms[0])

    @property
    def total_nats(self) -> float:
        return self.decoder + self.prior + float(self.terms[1:].sum())

    @property
    def bits_per_dim(self) -> float:
        return self.total_nats / (self.dim * LN2)

    def summary(self) -> dict[str, float]:
        return {"decoder": self.decoder, "decoder_normalizer": self.decoder_norm, "prior_kl": self.prior,
                "diffusion_terms": float(self.terms[1:].sum()), "total_nats": self.total_nats,
                "bits_per_dim": self.bits_per_dim}

    def format(self) -> str:
        return "".join(f"{k}: {v!r}\n" for k, v in self.summary().items())

    def table(self) -> list[tuple]:
        return [(t, repr(float(g)), repr(float(v)), repr(float(se)))
                for t, (g, v, se) in enumerate(zip(self.gammas, self.terms, self.term_se), 1)]


def variational_bound(model, predictor, shift: ShiftSchedule, schedule: NoiseSchedule, x0, condition: int,
                      rng: np.random.Generator | None, mc_per_t: int, sigma_diag=None,
                      noise: np.ndarray | None = None) -> BoundReport:
    """Stratified Monte-Carlo estimate of the weighted bound.

    Every t in 1..T gets ``mc_per_t`` draws; ``noise`` of shape (T, mc_per_t, d)
    may be passed instead of ``rng`` to share draws with another estimator.
    ``x0`` is one data point, or one point per draw (shape (mc_per_t, d)) for
    the bound averaged over data.
    """
    if mc_per_t < 1:
        raise ValueError("mc_per_t must be at least 1")
    x0 = np.asarray(x0, dtype=np.float64)
    d = x0.shape[-1]
    e = np.zeros(d) if predictor is None else predictor(np.array([condition]))[0]
    cond = np.full(mc_per_t, condition, dtype=np.int64)
    gammas = np.array([gamma_weight(schedule, t) for t in range(1, schedule.T + 1)])
    terms, ses = np.zeros(schedule.T), np.zeros(schedule.T)
    for t in range(1, schedule.T + 1):
        if noise is not None:
            eps = noise[t - 1]
        else:
            eps = rng.standard_normal((mc_per_t, d))
            if sigma_diag is not None:
                eps = eps * np.sqrt(sigma_diag)
        x_t = dc.sample_forward(schedule, shift.k[t] * e, x0, t, eps)
        g = model(x_t, t, cond if getattr(model, "conditional", False) else None)
        sq = gammas[t - 1] * weighted_sq_error(dc.g_target(schedule, x_t, x0, t) - g, sigma_diag)
        terms[t - 1] = sq.mean()
        ses[t - 1] = sq.std(ddof=1) / math.sqrt(mc_per_t) if mc_per_t > 1 else math.nan
    s_T = shift.k[schedule.T] * e
    rows = x0 if x0.ndim == 2 else x0[None]
    prior = float(np.mean([prior_kl(schedule, s_T, row, sigma_diag) for row in rows]))
    return BoundReport(gammas, terms, ses, decoder_normalizer(schedule, d, sigma_diag), prior, d)


# ---------------------------------------------------------------------------
# derivation checks

CHECK_NAMES = {
    "a": "kernel composition reproduces the shifted marginal",
    "b": "posterior equals brute-force Bayes on a grid",
    "c": "posterior mean from x0 equals posterior mean from eps",
    "d": "amendment-term closed forms (prior shift, data normalization)",
    "e": "implicit step with eta=1 equals the ancestral step",
    "f": "discretized mean-reverting SDE gives k_t = 1 - sqrt(abar_t)",
    "g": "data normalization: unshifted reverse step plus mean at t=1",
}


@dataclass
class IdentityCheck:
    key: str
    name: str
    max_error: float = 0.0
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)

    def record(self, err: float) -> None:
        if not err <= self.max_error:  # also catches NaN
            self.max_error = err if not math.isnan(err) else math.inf


@dataclass
class DerivationReport:
    checks: list[IdentityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failing(self) -> list[IdentityCheck]:
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        return "".join(f"({c.key}) {'PASS' if c.passed else 'FAIL'} max_rel_err={c.max_error:.3e} {c.name}\n"
                       for c in self.checks)


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def random_schedule(rng: np.random.Generator, max_T: int = 60) -> NoiseSchedule:
    T = int(rng.integers(2, max_T + 1))
    lo = rng.uniform(1e-4, 0.05)
    hi = rng.uniform(lo, 0.4)
    return schedule_from_betas(np.sort(rng.uniform(lo, hi, T)))


def _bayes_grid(log_density, x_guess: float, h: float, points: int = 4001, width: float = 14.0):
    """Mean and variance of an unnormalized 1-D density by trapezoidal quadrature."""
    f0, fp, fm = log_density(x_guess), log_density(x_guess + h), log_density(x_guess - h)
    curv = (fp - 2 * f0 + fm) / (h * h)
    slope = (fp - fm) / (2 * h)
    mode = x_guess - slope / curv
    sd = 1.0 / math.sqrt(-curv)
    grid = np.linspace(mode - width * sd, mode + width * sd, points)
    logp = log_density(grid)
    w = np.exp(logp - logp.max())
    z = np.trapezoid(w, grid)
    mean = np.trapezoid(w * grid, grid) / z
    var = np.trapezoid(w * (grid - mean) ** 2, grid) / z
    return mean, var


def verify_derivations(trials: int, seed: int, modes=None, k_offset: float = 0.0) -> DerivationReport:
    """Check every closed-form identity on random schedules, modes, dimensions and inputs.

    ``k_offset`` perturbs the built shift schedules (never the reference
    formulas) so a harness can confirm the checks are sensitive.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    modes = list(ShiftMode) if modes is None else [ShiftMode.parse(m) for m in modes]
    checks = {k: IdentityCheck(k, v) for k, v in CHECK_NAMES.items()}

    def built(mode, sched) -> ShiftSchedule:
        base = build_shift_schedule(mode, sched)
        return base if k_offset == 0.0 else ShiftSchedule(base.mode, base.k + k_offset)

    for _ in range(trials):
        sched = random_schedule(rng)
        T = sched.T
        mode = modes[int(rng.integers(len(modes)))]
        shift = built(mode, sched)
        d = int(rng.integers(1, 6))
        e = 2.0 * rng.standard_normal(d)
        x0 = rng.standard_normal(d)
        sa = np.sqrt(sched.alpha)

        # (a) compose kernels from s_0 and compare with the marginal from the k formula
        mean, var = x0.copy(), 0.0
        for t in range(1, T + 1):
            kern = dc.forward_kernel(sched, shift.k[t] * e, shift.k[t - 1] * e, mean, t)
            mean, var = kern.mean, sched.alpha[t] * var + kern.var_scale
            ref = dc.forward_marginal(sched, shift_coefficient(mode, sched, t) * e, x0, t)
            checks["a"].record(max(_rel(mean, ref.mean), _rel(var, ref.var_scale)))

        # (b) Bayes posterior by 1-D quadrature on the first coordinate
        t = int(rng.integers(2, T + 1))
        s_t, s_p = shift.k[t] * e[0], shift.k[t - 1] * e[0]
        prior_mean = math.sqrt(sched.alpha_bar[t - 1]) * x0[0] + s_p
        prior_var = 1.0 - sched.alpha_bar[t - 1]
        x_t = dc.sample_forward(sched, s_t, x0[0], t, rng.standard_normal())

        def log_post(x, t=t, s_t=s_t, s_p=s_p, pm=prior_mean, pv=prior_var, x_t=x_t):
            lik_mean = sa[t] * x + s_t - sa[t] * s_p
            return -0.5 * (x - pm) ** 2 / pv - 0.5 * (x_t - lik_mean) ** 2 / sched.beta[t]

        h = math.sqrt(min(prior_var, sched.beta[t]))
        g_mean, g_var = _bayes_grid(log_post, prior_mean, h)
        post = dc.posterior_params(sched, s_t, s_p, x_t, x0[0], t)
        checks["b"].record(max(_rel(g_mean, post.mean), _rel(g_var, post.var_scale)))

        # (c) eps substitution
        eps = rng.standard_normal(d)
        s_t, s_p = shift.k[t] * e, shift.k[t - 1] * e
        xt = dc.sample_forward(sched, s_t, x0, t, eps)
        checks["c"].record(_rel(dc.posterior_mean_from_eps(sched, s_t, s_p, xt, eps, t),
                                dc.posterior_params(sched, s_t, s_p, xt, x0, t).mean))

        # (d) amendment closed forms against the general expression
        prior_shift = built(ShiftMode.PRIOR_SHIFT, sched)
        data_norm = built(ShiftMode.DATA_NORMALIZATION, sched)
        for tt in range(1, T + 1):
            checks["d"].record(_rel(amendment_term(prior_shift, sched, tt, e), (1.0 - 1.0 / sa[tt]) * e))
            checks["d"].record(_rel(amendment_term(data_norm, sched, tt, e), e if tt == 1 else 0.0 * e))

        # (e) eta = 1 implicit step versus ancestral step with shared noise
        g = rng.standard_normal(d) + s_t / math.sqrt(1.0 - sched.alpha_bar[t])
        z = rng.standard_normal(d)
        sigma = dc.ddim_sigma(sched, t - 1, t, 1.0)
        rev = dc.reverse_step_params(sched, s_t, s_p, xt, g, t)
        implicit = dc.ddim_step(sched, s_t, s_p, xt, g, t, t - 1, sigma, z)
        checks["e"].record(max(_rel(implicit, rev.mean + math.sqrt(rev.var_scale) * z),
                               _rel(sigma * sigma, rev.var_scale)))

        # (f) discretized SDE recurrence
        mean, var = x0.copy(), 0.0
        for tt in range(1, T + 1):
            mean = sa[tt] * mean + (1.0 - sa[tt]) * e
            var = sched.alpha[tt] * var + (1.0 - sched.alpha[tt])
            ref = dc.forward_marginal(sched, prior_shift.k[tt] * e, x0, tt)
            checks["f"].record(max(_rel(mean, ref.mean), _rel(var, ref.var_scale)))

        # (g) data normalization reverse steps
        for tt in (1, t):
            xn = rng.standard_normal(d)
            ep = rng.standard_normal(d)
            shifted = dc.posterior_mean_from_eps(sched, data_norm.k[tt] * e, data_norm.k[tt - 1] * e, xn, ep, tt)
            plain = dc.posterior_mean_from_eps(sched, 0.0 * e, 0.0 * e, xn, ep, tt)
            checks["g"].record(_rel(shifted, plain + (e if tt == 1 else 0.0)))

    return DerivationReport(list(checks.values()))
