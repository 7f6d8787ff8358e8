"""Dual objectives for KL-constrained distributionally robust aggregation.

Core quantity: for a batch of per-sample adversarial losses L and a dual
variable lam >= 0, the KL-DRO dual objective is

    A(L, lam) = lam*eps + (lam + kappa) * log( mean_i exp(L_i / (lam + kappa)) )

which upper-bounds (and at the optimal lam equals) the worst-case
penalized expectation of L over the KL ball of radius eps around the
uniform batch distribution.  lam + kappa acts as a temperature: large
values recover plain averaging, small values focus on the loss tail.

The general-divergence dual adds a centering variable rho:

    G(L, lam, rho) = lam*eps + rho + (lam + kappa) * mean_i f*((L_i - rho) / (lam + kappa))

and is jointly convex in (lam, rho).  All exponentials are evaluated
with max-subtraction so small temperatures do not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from .divergence import INFINITE, DivergenceSpec, InfiniteDivergence

__all__ = [
    "LambdaMode",
    "LossBatch",
    "DroConfig",
    "GeneralDualSolution",
    "ConvergenceError",
    "kl_dual_objective",
    "kl_dual_derivative",
    "kl_weights",
    "general_dual_objective",
    "general_dual_solve",
    "golden_section_min",
]


class LambdaMode(str, Enum):
    FIXED = "fixed"
    LEARNABLE = "learnable"
    OPTIMIZED = "optimized"


class ConvergenceError(RuntimeError):
    """A solver exhausted its iteration budget without converging."""


@dataclass
class LossBatch:
    """Per-sample adversarial losses for one minibatch (size >= 1, all finite)."""

    losses: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.losses, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"losses must be a nonempty 1-D vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"non-finite loss at position {bad}: {arr[bad]!r}")
        self.losses = arr

    @property
    def size(self) -> int:
        return int(self.losses.size)


@dataclass
class DroConfig:
    """Radius, soft penalty, dual-variable treatment, and solver tolerances.

    epsilon and kappa must be strictly positive; kappa keeps the dual
    derivative finite at lam = 0.  lambda_bounds only constrain the
    learnable treatment (the paper-style projection interval); defaults
    are wide enough that the projection stays inactive unless the
    objective pushes hard.
    """

    epsilon: float = 0.1
    kappa: float = 0.1
    lambda_mode: LambdaMode = LambdaMode.OPTIMIZED
    lambda_init: float = 5.0
    lambda_lr: float = 0.1
    lambda_bounds: Tuple[float, float] = (0.0, 1e3)
    solver_tol: float = 1e-8

    def __post_init__(self) -> None:
        if isinstance(self.lambda_mode, str) and not isinstance(self.lambda_mode, LambdaMode):
            self.lambda_mode = LambdaMode(self.lambda_mode)
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.kappa > 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        lo, hi = self.lambda_bounds
        if not (0.0 <= lo < hi):
            raise ValueError(f"lambda_bounds must satisfy 0 <= lo < hi, got {self.lambda_bounds}")
        if not (lo <= self.lambda_init <= hi):
            raise ValueError(
                f"lambda_init={self.lambda_init} outside lambda_bounds {self.lambda_bounds}"
            )
        if not self.lambda_lr > 0.0:
            raise ValueError(f"lambda_lr must be > 0, got {self.lambda_lr}")
        if not self.solver_tol > 0.0:
            raise ValueError(f"solver_tol must be > 0, got {self.solver_tol}")


def _check_lambda(lam: float) -> float:
    if not lam >= 0.0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return float(lam)


def _stable_exp_terms(losses: np.ndarray, temp: float) -> Tuple[float, np.ndarray]:
    """Return (max loss, exp((L - max)/temp)); the shift avoids overflow."""
    m = float(losses.max())
    return m, np.exp((losses - m) / temp)


def kl_dual_objective(batch: LossBatch, lam: float, cfg: DroConfig) -> float:
    """lam*eps + (lam+kappa) * log mean exp(L / (lam+kappa)), max-stabilized."""
    lam = _check_lambda(lam)
    temp = lam + cfg.kappa
    m, u = _stable_exp_terms(batch.losses, temp)
    return lam * cfg.epsilon + m + temp * math.log(float(u.mean()))


def kl_dual_derivative(batch: LossBatch, lam: float, cfg: DroConfig) -> float:
    """d/dlam of kl_dual_objective:

    eps + log mean exp(L/t) - (1/t) * (mean L*exp(L/t)) / (mean exp(L/t))

    with t = lam + kappa.  The shifted exponentials cancel in the ratio,
    so the same max-subtraction stabilizes every term.
    """
    lam = _check_lambda(lam)
    temp = lam + cfg.kappa
    m, u = _stable_exp_terms(batch.losses, temp)
    mean_u = float(u.mean())
    tilted_mean_loss = float((batch.losses * u).sum() / u.sum())
    return cfg.epsilon + m / temp + math.log(mean_u) - tilted_mean_loss / temp


def kl_weights(batch: LossBatch, lam: float, cfg: DroConfig) -> np.ndarray:
    """Softmax tilt w_i = exp(L_i/t) / sum_j exp(L_j/t); the gradient of the
    log-sum-exp objective with respect to the per-sample losses."""
    lam = _check_lambda(lam)
    temp = lam + cfg.kappa
    log_u = (batch.losses - float(batch.losses.max())) / temp
    log_u -= math.log(float(np.exp(log_u).sum()))
    return np.exp(log_u)


def general_dual_objective(
    batch: LossBatch,
    lam: float,
    rho: float,
    cfg: DroConfig,
    spec: DivergenceSpec,
) -> Union[float, InfiniteDivergence]:
    """lam*eps + rho + (lam+kappa) * mean f*((L_i - rho)/(lam+kappa)).

    Returns tagged INFINITE if f* is infinite at any sample (clamping
    would silently change the objective).
    """
    lam = _check_lambda(lam)
    temp = lam + cfg.kappa
    acc = 0.0
    for li in batch.losses:
        y = (float(li) - rho) / temp
        val = spec.f_star(y)
        if not math.isfinite(val):
            return INFINITE
        acc += val
    return lam * cfg.epsilon + rho + temp * acc / batch.size


@dataclass(frozen=True)
class GeneralDualSolution:
    lambda_star: float
    rho_star: float
    value: float


def golden_section_min(fn, lo: float, hi: float, tol: float) -> Tuple[float, float]:
    """Minimize a unimodal fn on [lo, hi] to interval width <= tol.

    Returns (argmin estimate, fn value there).  Infinite fn values are
    handled by ordinary comparison, so a spec whose f* leaves its finite
    domain inside the interval just steers the search away.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


_MAX_WIDENINGS = 60


def general_dual_solve(
    batch: LossBatch,
    cfg: DroConfig,
    spec: DivergenceSpec,
) -> GeneralDualSolution:
    """Joint minimizer of the general dual over lam >= 0, rho in R.

    The objective is jointly convex, so min over rho at fixed lam is a
    1-D convex problem and the partially-minimized function
    h(lam) = min_rho G(lam, rho) is itself convex.  We therefore run
    golden-section on each coordinate with the rho search nested inside
    the lam search; plain alternating sweeps zigzag and stall in the
    curved (lam, rho) valley when epsilon is small.

    Both search intervals widen (x2) whenever a minimizer lands on a
    boundary: rho starts at [min L - 1, max L + 1], lam at [0, 10].
    """
    losses = batch.losses

    def as_float(v: Union[float, InfiniteDivergence]) -> float:
        return math.inf if isinstance(v, InfiniteDivergence) else v

    rho_box = [float(losses.min()) - 1.0, float(losses.max()) + 1.0]

    def min_over_rho(lam: float) -> Tuple[float, float]:
        for _ in range(_MAX_WIDENINGS):
            lo, hi = rho_box
            rho, v = golden_section_min(
                lambda r: as_float(general_dual_objective(batch, lam, r, cfg, spec)),
                lo,
                hi,
                (cfg.solver_tol / 10.0) * (1.0 + hi - lo),
            )
            width = hi - lo
            if rho < lo + 0.01 * width:
                rho_box[0] = lo - width
            elif rho > hi - 0.01 * width:
                rho_box[1] = hi + width
            else:
                return rho, v
        raise ConvergenceError("rho search interval kept widening; pathological divergence spec?")

    lam_hi = 10.0
    for _ in range(_MAX_WIDENINGS):
        lam, v = golden_section_min(
            lambda x: min_over_rho(x)[1],
            0.0,
            lam_hi,
            (cfg.solver_tol / 10.0) * (1.0 + lam_hi),
        )
        if lam > 0.99 * lam_hi:
            lam_hi *= 2.0
            continue
        rho, v = min_over_rho(lam)
        if not math.isfinite(v):
            raise ConvergenceError("dual objective infinite at the solver's minimizer")
        return GeneralDualSolution(lambda_star=lam, rho_star=rho, value=v)
    raise ConvergenceError("lambda search interval kept widening; objective appears unbounded")
