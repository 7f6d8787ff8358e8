"""Self-contained oracle suite behind the `verify` CLI subcommand.

Each check regenerates seeded random instances, exercises one contract
(duality gap, bisection postconditions, gradient fidelity, objective
invariants), and reports the worst observed violation.  The headline
number is the duality gap: the brute-force primal value and the dual
optimum must agree to 2e-4 on every small instance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .divergence import chi2_spec, kl_spec
from .dro_core import (
    DroConfig,
    LossBatch,
    general_dual_objective,
    general_dual_solve,
    kl_dual_derivative,
    kl_dual_objective,
    kl_weights,
)
from .lambda_solver import solve_optimized
from .primal_oracle import kl_tilt_crosscheck, primal_solve
from .toy_model import (
    LossKind,
    PreferenceSample,
    ReferenceParams,
    ToyModelParams,
    loss_grad_delta,
    loss_grad_params,
    capo_loss,
    cat_loss,
    utility_loss,
    UtilitySample,
)
from .trainer import chain_rule_check

__all__ = ["CheckResult", "run_verification", "DUALITY_GAP_TOL"]

DUALITY_GAP_TOL = 2e-4
WEAK_DUALITY_SLACK = 1e-6
DERIVATIVE_REL_TOL = 1e-6
GRADIENT_REL_TOL = 1e-4

DerivativeFn = Callable[[LossBatch, float, DroConfig], float]


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    detail: str


def _instance_cfg(rng: np.random.Generator) -> DroConfig:
    return DroConfig(
        epsilon=float(rng.choice([0.05, 0.1, 0.5])),
        kappa=float(rng.choice([0.08, 0.1, 0.5])),
    )


def _small_batch(rng: np.random.Generator, max_n: int = 4) -> LossBatch:
    n = int(rng.integers(2, max_n + 1))
    return LossBatch(rng.normal(0.0, 1.0, n))


def _kl_dual_optimum(batch: LossBatch, cfg: DroConfig) -> float:
    return kl_dual_objective(batch, solve_optimized(batch, cfg), cfg)


def check_duality_kl(trials: int, seed: int) -> CheckResult:
    worst = 0.0
    for i in range(trials):
        rng = np.random.default_rng([seed, 10, i])
        batch, cfg = _small_batch(rng), _instance_cfg(rng)
        dual = _kl_dual_optimum(batch, cfg)
        primal = primal_solve(batch, cfg, kl_spec(), trials=10_000, seed=seed + i).value
        if primal > dual + WEAK_DUALITY_SLACK:
            return CheckResult(
                "duality_kl", False, primal - dual, f"weak duality violated at instance seed {i}"
            )
        worst = max(worst, abs(dual - primal))
        if worst > DUALITY_GAP_TOL:
            return CheckResult(
                "duality_kl", False, worst, f"duality gap {worst:.2e} at instance seed {i}"
            )
    return CheckResult("duality_kl", True, worst, f"max |primal - dual| over {trials} instances")


def check_duality_chi2(trials: int, seed: int) -> CheckResult:
    worst = 0.0
    for i in range(trials):
        rng = np.random.default_rng([seed, 20, i])
        batch, cfg = _small_batch(rng), _instance_cfg(rng)
        dual = general_dual_solve(batch, cfg, chi2_spec()).value
        primal = primal_solve(batch, cfg, chi2_spec(), trials=10_000, seed=seed + i).value
        if primal > dual + WEAK_DUALITY_SLACK:
            return CheckResult(
                "duality_chi2", False, primal - dual, f"weak duality violated at instance seed {i}"
            )
        worst = max(worst, abs(dual - primal))
        if worst > DUALITY_GAP_TOL:
            return CheckResult(
                "duality_chi2", False, worst, f"duality gap {worst:.2e} at instance seed {i}"
            )
    return CheckResult("duality_chi2", True, worst, f"max |primal - dual| over {trials} instances")


def check_tilt_crosscheck(trials: int, seed: int) -> CheckResult:
    worst = 0.0
    for i in range(trials):
        rng = np.random.default_rng([seed, 30, i])
        batch, cfg = _small_batch(rng), _instance_cfg(rng)
        tilt = kl_tilt_crosscheck(batch, cfg)
        primal = primal_solve(batch, cfg, kl_spec(), trials=10_000, seed=seed + i).value
        dual = _kl_dual_optimum(batch, cfg)
        gap = max(abs(tilt - primal), abs(tilt - dual))
        worst = max(worst, gap)
        if worst > DUALITY_GAP_TOL:
            return CheckResult(
                "tilt_crosscheck", False, worst, f"oracles disagree at instance seed {i}"
            )
    return CheckResult(
        "tilt_crosscheck", True, worst, f"max oracle disagreement over {trials} instances"
    )


def check_bisection(
    trials: int, seed: int, derivative_fn: Optional[DerivativeFn] = None
) -> CheckResult:
    """Solver postconditions, preceded by a consistency test of the
    derivative the solver relies on against finite differences of the
    objective.  An instrumented (corrupted) derivative_fn is caught here."""
    dfn: DerivativeFn = derivative_fn if derivative_fn is not None else kl_dual_derivative
    worst = 0.0
    for i in range(trials):
        rng = np.random.default_rng([seed, 40, i])
        n = int(rng.integers(2, 33))
        batch = LossBatch(rng.normal(0.0, float(rng.uniform(0.5, 2.0)), n))
        cfg = _instance_cfg(rng)

        lam_probe = float(rng.uniform(0.01, 3.0))
        h = 1e-6
        fd = (
            kl_dual_objective(batch, lam_probe + h, cfg)
            - kl_dual_objective(batch, lam_probe - h, cfg)
        ) / (2.0 * h)
        ana = dfn(batch, lam_probe, cfg)
        rel = abs(ana - fd) / max(1.0, abs(fd))
        worst = max(worst, rel)
        if rel > DERIVATIVE_REL_TOL:
            return CheckResult(
                "bisection",
                False,
                rel,
                f"derivative inconsistent with finite differences at instance seed {i}",
            )

        lam_star = solve_optimized(batch, cfg, derivative_fn=dfn)
        if lam_star == 0.0:
            if dfn(batch, 0.0, cfg) < 0.0:
                return CheckResult(
                    "bisection", False, 0.0, f"returned 0 with negative slope at instance seed {i}"
                )
        else:
            d_star = abs(dfn(batch, lam_star, cfg))
            if d_star > cfg.solver_tol:
                return CheckResult(
                    "bisection",
                    False,
                    d_star,
                    f"|dA(lam*)|={d_star:.2e} > tol at instance seed {i}",
                )
        a_star = kl_dual_objective(batch, lam_star, cfg)
        for lam in rng.uniform(0.0, 100.0, 100):
            if a_star > kl_dual_objective(batch, float(lam), cfg) + 1e-6:
                return CheckResult(
                    "bisection", False, a_star, f"lam* not a minimizer at instance seed {i}"
                )
    return CheckResult("bisection", True, worst, f"max derivative rel err over {trials} instances")


def _grad_rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    return float(np.abs(analytic - fd).max() / max(float(np.abs(fd).max()), 1e-8))


def _fd_param_grad(loss_fn, params: ToyModelParams, h: float = 1e-5) -> Tuple[np.ndarray, np.ndarray]:
    outs = []
    for arr in (params.embed, params.out):
        fd = np.zeros_like(arr)
        for pos in np.ndindex(arr.shape):
            orig = arr[pos]
            arr[pos] = orig + h
            hi = loss_fn()
            arr[pos] = orig - h
            lo = loss_fn()
            arr[pos] = orig
            fd[pos] = (hi - lo) / (2.0 * h)
        outs.append(fd)
    return outs[0], outs[1]


def check_gradients(trials: int, seed: int) -> CheckResult:
    worst = 0.0
    kinds = [LossKind.CAT, LossKind.CAPO, LossKind.UTILITY]
    for i in range(trials):
        rng = np.random.default_rng([seed, 50, i])
        v, d = int(rng.choice([4, 16])), int(rng.choice([2, 8]))
        params = ToyModelParams(
            embed=0.1 * rng.standard_normal((v, d)), out=0.1 * rng.standard_normal((d, v))
        )
        ref = ReferenceParams(
            embed=0.1 * rng.standard_normal((v, d)), out=0.1 * rng.standard_normal((d, v))
        )
        kind = kinds[i % len(kinds)]
        beta = 0.25
        delta = 0.1 * rng.standard_normal(d)
        if kind is LossKind.UTILITY:
            sample = UtilitySample(
                prompt=tuple(int(t) for t in rng.integers(0, v, size=2)),
                target=int(rng.integers(0, v)),
            )
            delta = np.zeros(d)
            loss_fn = lambda: utility_loss(params, sample)
        else:
            desired, undesired = (int(x) for x in rng.choice(v, size=2, replace=False))
            sample = PreferenceSample(
                prompt=tuple(int(t) for t in rng.integers(0, v, size=2)),
                desired=desired,
                undesired=undesired,
            )
            if kind is LossKind.CAT:
                loss_fn = lambda: cat_loss(params, ref, sample, delta)
            else:
                loss_fn = lambda: capo_loss(params, ref, sample, delta, beta)

        ana = loss_grad_params(kind, params, ref, sample, delta, beta)
        fd_embed, fd_out = _fd_param_grad(loss_fn, params)
        rel = max(_grad_rel_err(ana.embed, fd_embed), _grad_rel_err(ana.out, fd_out))

        if kind is not LossKind.UTILITY:
            ana_d = loss_grad_delta(kind, params, ref, sample, delta, beta)
            fd_d = np.zeros(d)
            for pos in range(d):
                orig = delta[pos]
                delta[pos] = orig + 1e-5
                hi = loss_fn()
                delta[pos] = orig - 1e-5
                lo = loss_fn()
                delta[pos] = orig
                fd_d[pos] = (hi - lo) / 2e-5
            rel = max(rel, _grad_rel_err(ana_d, fd_d))

        report = chain_rule_check(instance_seed=seed + i)
        rel = max(rel, report.max_rel_error)
        worst = max(worst, rel)
        if rel > GRADIENT_REL_TOL:
            return CheckResult(
                "gradient_check", False, rel, f"gradient mismatch at instance seed {i}"
            )
    return CheckResult(
        "gradient_check", True, worst, f"max gradient rel err over {trials} instances"
    )


def check_invariants(trials: int, seed: int) -> CheckResult:
    """Sandwich, shift equivariance, monotonicity, convexity, weights order,
    and the averaging/worst-case temperature limits."""
    worst = 0.0
    kl = kl_spec()
    chi2 = chi2_spec()
    for i in range(trials):
        rng = np.random.default_rng([seed, 60, i])
        n = int(rng.integers(2, 17))
        losses = rng.normal(0.0, float(rng.uniform(0.5, 2.0)), n)
        batch = LossBatch(losses)
        cfg = _instance_cfg(rng)
        lam = float(rng.uniform(0.0, 5.0))

        centered = kl_dual_objective(batch, lam, cfg) - lam * cfg.epsilon
        viol = max(float(losses.mean()) - centered, centered - float(losses.max()))
        if viol > 1e-10:
            return CheckResult(
                "invariants", False, viol, f"sandwich bound violated at instance seed {i}"
            )
        worst = max(worst, viol)

        shift = float(rng.normal())
        lhs = kl_dual_objective(LossBatch(losses + shift), lam, cfg)
        rhs = kl_dual_objective(batch, lam, cfg) + shift
        err = abs(lhs - rhs)
        worst = max(worst, err)
        if err > 1e-10:
            return CheckResult(
                "invariants", False, err, f"shift equivariance violated at instance seed {i}"
            )

        j = int(rng.integers(0, n))
        bumped = losses.copy()
        bumped[j] += 1e-4
        if kl_dual_objective(LossBatch(bumped), lam, cfg) <= kl_dual_objective(batch, lam, cfg) - 1e-12:
            return CheckResult(
                "invariants", False, 0.0, f"monotonicity violated at instance seed {i}"
            )

        lam1, lam2 = sorted(rng.uniform(0.0, 10.0, 2))
        mid_val = kl_dual_objective(batch, 0.5 * (lam1 + lam2), cfg)
        chord = 0.5 * (kl_dual_objective(batch, lam1, cfg) + kl_dual_objective(batch, lam2, cfg))
        if mid_val > chord + 1e-10:
            return CheckResult(
                "invariants", False, mid_val - chord, f"convexity violated at instance seed {i}"
            )

        for spec in (kl, chi2):
            p1 = (float(rng.uniform(0.0, 3.0)), float(rng.uniform(-2.0, 2.0)))
            p2 = (float(rng.uniform(0.0, 3.0)), float(rng.uniform(-2.0, 2.0)))
            mid = (0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1]))
            vals = [
                general_dual_objective(batch, a, b, cfg, spec) for (a, b) in (p1, p2, mid)
            ]
            if all(isinstance(v, float) for v in vals):
                if vals[2] > 0.5 * (vals[0] + vals[1]) + 1e-10:
                    return CheckResult(
                        "invariants",
                        False,
                        vals[2] - 0.5 * (vals[0] + vals[1]),
                        f"joint convexity violated at instance seed {i}",
                    )

        w = kl_weights(batch, lam, cfg)
        if abs(float(w.sum()) - 1.0) > 1e-12:
            return CheckResult(
                "invariants", False, abs(float(w.sum()) - 1.0), f"weights not normalized at seed {i}"
            )
        order = np.argsort(losses)
        if np.any(np.diff(w[order]) < -1e-15):
            return CheckResult(
                "invariants", False, 0.0, f"weights not order-preserving at instance seed {i}"
            )

        # averaging / worst-case limits: rescale to a unit-or-larger spread so
        # the 1e-2*spread tolerance dominates the residual log(B) term, and
        # use a small kappa so the cold temperature 1e-3 is reachable
        spread = float(losses.max() - losses.min())
        if spread > 1e-12:
            scale = float(rng.uniform(1.0, 4.0)) / spread
            limit_losses = losses * scale
            limit_batch = LossBatch(limit_losses)
            limit_spread = float(limit_losses.max() - limit_losses.min())
            cold_cfg = DroConfig(epsilon=cfg.epsilon, kappa=5e-4)
            for temp, target, c in (
                (1e3, float(limit_losses.mean()), cfg),
                (1e-3, float(limit_losses.max()), cold_cfg),
            ):
                lam_t = temp - c.kappa
                centered = kl_dual_objective(limit_batch, lam_t, c) - lam_t * c.epsilon
                err = abs(centered - target)
                if err > 1e-2 * limit_spread:
                    return CheckResult(
                        "invariants",
                        False,
                        err,
                        f"temperature limit violated at instance seed {i}",
                    )
    return CheckResult("invariants", True, worst, f"worst violation over {trials} instances")


def run_verification(
    trials: int = 50,
    seed: int = 0,
    derivative_fn: Optional[DerivativeFn] = None,
) -> List[CheckResult]:
    """Run the whole suite; returns one result per check."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    return [
        check_duality_kl(trials, seed),
        check_duality_chi2(trials, seed),
        check_tilt_crosscheck(trials, seed),
        check_bisection(trials, seed, derivative_fn=derivative_fn),
        check_gradients(min(trials, 20), seed),
        check_invariants(trials, seed),
    ]
