"""Dual-variable treatments: fixed, learnable (projected gradient), optimized.

The optimized treatment re-solves min_{lam >= 0} A(L, lam) per batch.
A is smooth and convex, so either the derivative at 0 is already
nonnegative (minimum at lam = 0) or a sign change exists and bisection
on the derivative finds the interior critical point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

from .dro_core import DroConfig, LambdaMode, LossBatch, kl_dual_derivative

__all__ = [
    "DualState",
    "BracketError",
    "solve_optimized",
    "learnable_step",
    "resolve_lambda",
]

_MAX_DOUBLINGS = 60
_MAX_BISECTIONS = 200


class BracketError(RuntimeError):
    """Bracket expansion failed to find a positive derivative (non-finite losses?)."""


@dataclass
class DualState:
    """Current dual variable plus its trajectory across training steps."""

    lam: float
    mode: LambdaMode
    history: List[Tuple[int, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.lam >= 0.0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")

    def record(self, step: int, lam: float) -> None:
        if self.history and step <= self.history[-1][0]:
            raise ValueError(
                f"history step indices must increase: {step} after {self.history[-1][0]}"
            )
        self.history.append((step, lam))


def solve_optimized(
    batch: LossBatch,
    cfg: DroConfig,
    derivative_fn: Optional[Callable[[LossBatch, float, DroConfig], float]] = None,
) -> float:
    """Per-batch minimizer of the KL dual objective over lam >= 0.

    If the derivative at 0 is nonnegative the objective is nondecreasing
    and 0 is returned.  Otherwise the bracket [0, lam_r] is grown by
    doubling from lam_r = 1 until the derivative turns positive, then
    bisected until |dA| <= solver_tol.  The derivative tolerance is the
    convergence criterion (a returned nonzero point must satisfy it);
    the iteration cap only guards against losses so extreme that float
    resolution cannot meet the tolerance.

    derivative_fn exists for verification harnesses that need to inject
    an instrumented derivative; it defaults to kl_dual_derivative.
    """
    dfn = derivative_fn if derivative_fn is not None else kl_dual_derivative
    if dfn(batch, 0.0, cfg) >= 0.0:
        return 0.0

    lam_r = 1.0
    for _ in range(_MAX_DOUBLINGS):
        if dfn(batch, lam_r, cfg) > 0.0:
            break
        lam_r *= 2.0
    else:
        raise BracketError(
            f"derivative still negative after {_MAX_DOUBLINGS} doublings (lam_r={lam_r})"
        )

    lo, hi = 0.0, lam_r
    mid = 0.5 * (lo + hi)
    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        d = dfn(batch, mid, cfg)
        if abs(d) <= cfg.solver_tol:
            return mid
        if d > 0.0:
            hi = mid
        else:
            lo = mid
    return mid


def learnable_step(
    state: DualState,
    batch: LossBatch,
    cfg: DroConfig,
    step: Optional[int] = None,
) -> DualState:
    """One projected gradient step on lam: clamp(lam - lr * dA, bounds).

    step indexes the history entry; when omitted it continues from the
    last recorded index.
    """
    if state.mode is not LambdaMode.LEARNABLE:
        raise ValueError(f"learnable_step requires LEARNABLE mode, got {state.mode}")
    lo, hi = cfg.lambda_bounds
    grad = kl_dual_derivative(batch, state.lam, cfg)
    new_lam = min(max(state.lam - cfg.lambda_lr * grad, lo), hi)
    if step is None:
        step = state.history[-1][0] + 1 if state.history else 0
    new_state = DualState(lam=new_lam, mode=state.mode, history=list(state.history))
    new_state.record(step, new_lam)
    return new_state


def resolve_lambda(
    state: DualState,
    batch: LossBatch,
    cfg: DroConfig,
    step: int,
) -> Tuple[float, DualState]:
    """Dispatch over the dual-variable treatment for one training step.

    Fixed: pass lambda_init through, state untouched.  Learnable: one
    projected gradient step, then use the updated lam.  Optimized:
    re-solve from scratch and record the solution.
    """
    if cfg.lambda_mode is LambdaMode.FIXED:
        return cfg.lambda_init, state
    if cfg.lambda_mode is LambdaMode.LEARNABLE:
        new_state = learnable_step(state, batch, cfg, step=step)
        return new_state.lam, new_state
    lam_star = solve_optimized(batch, cfg)
    new_state = DualState(lam=lam_star, mode=state.mode, history=list(state.history))
    new_state.record(step, lam_star)
    return lam_star, new_state
