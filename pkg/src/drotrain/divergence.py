"""f-divergence generators and their Legendre transforms.

A divergence spec bundles a convex generator f with f(1) = 0 and its
Legendre transform f*(y) = sup_t {t*y - f(t)} over t >= 0.  The pair is
what the dual reformulation of the robust objective consumes: f defines
the ambiguity set, f* shows up inside the dual expectation.

Shipped instances: KL (f(t) = t*log t, f*(y) = exp(y - 1)) and
chi-square (f(t) = (t-1)^2, f*(y) = y + y^2/4 for y >= -2, else -1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "DivergenceSpec",
    "InfiniteDivergence",
    "INFINITE",
    "kl_spec",
    "chi2_spec",
    "divergence_value",
]


@dataclass(frozen=True)
class InfiniteDivergence:
    """Tagged infinity: absolute continuity failed or f* left its finite domain.

    Deliberately not a float so callers cannot silently propagate it
    through arithmetic; anything receiving one must branch on it.
    """

    def __repr__(self) -> str:
        return "InfiniteDivergence()"


INFINITE = InfiniteDivergence()


@dataclass(frozen=True)
class DivergenceSpec:
    """A convex generator f (with f(1) = 0) and its Legendre transform."""

    name: str
    f: Callable[[float], float]
    f_star: Callable[[float], float]
    f_star_domain_note: str


def _f_kl(t: float) -> float:
    # continuous extension: t*log t -> 0 as t -> 0+
    if t < 0.0:
        raise ValueError(f"KL generator defined on t >= 0, got t={t}")
    if t == 0.0:
        return 0.0
    return t * math.log(t)


def _f_star_kl(y: float) -> float:
    return math.exp(y - 1.0)


def kl_spec() -> DivergenceSpec:
    """KL divergence generator: f(t) = t*log(t), f*(y) = exp(y - 1)."""
    return DivergenceSpec(
        name="kl",
        f=_f_kl,
        f_star=_f_star_kl,
        f_star_domain_note="finite for all real y",
    )


def _f_chi2(t: float) -> float:
    if t < 0.0:
        raise ValueError(f"chi-square generator defined on t >= 0, got t={t}")
    return (t - 1.0) ** 2


def _f_star_chi2(y: float) -> float:
    # sup over t >= 0 of t*y - (t-1)^2: interior optimum t = 1 + y/2 when
    # y >= -2, otherwise the boundary t = 0 gives -f(0) = -1.  The two
    # branches meet C^1-smoothly at y = -2.
    if y >= -2.0:
        return y + 0.25 * y * y
    return -1.0


def chi2_spec() -> DivergenceSpec:
    """Chi-square generator: f(t) = (t-1)^2, with piecewise f*."""
    return DivergenceSpec(
        name="chi2",
        f=_f_chi2,
        f_star=_f_star_chi2,
        f_star_domain_note="finite for all real y (equals -1 for y < -2)",
    )


def divergence_value(
    spec: DivergenceSpec,
    q: Sequence[float],
    p: Sequence[float],
    normalization_tol: float = 1e-10,
) -> Union[float, InfiniteDivergence]:
    """Evaluate D_f(q || p) = sum_i p_i * f(q_i / p_i) on finite support.

    Returns the tagged INFINITE when q is not absolutely continuous
    w.r.t. p (some p_i = 0 with q_i > 0).  Entries with p_i = q_i = 0
    contribute nothing.
    """
    q_arr = np.asarray(q, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    if q_arr.shape != p_arr.shape or q_arr.ndim != 1:
        raise ValueError(
            f"q and p must be equal-length vectors, got shapes {q_arr.shape} and {p_arr.shape}"
        )
    if abs(q_arr.sum() - 1.0) > normalization_tol:
        raise ValueError(f"q does not sum to 1 (sum={q_arr.sum()!r})")
    if abs(p_arr.sum() - 1.0) > normalization_tol:
        raise ValueError(f"p does not sum to 1 (sum={p_arr.sum()!r})")
    if np.any(q_arr < 0.0) or np.any(p_arr < 0.0):
        raise ValueError("probability vectors must be nonnegative")

    total = 0.0
    for qi, pi in zip(q_arr, p_arr):
        if pi == 0.0:
            if qi > 0.0:
                return INFINITE
            continue
        total += pi * spec.f(qi / pi)
    return total
