"""Embedding-space attack: projected gradient ascent on the perturbation.

The perturbation set is the Euclidean ball of the configured radius;
projection is exact (radial rescale).  The perturbation starts at zero,
so runs are deterministic without any seed plumbing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .toy_model import (
    PreferenceSample,
    ReferenceParams,
    ToyModelParams,
    attack_objective_grad_delta,
)

__all__ = ["AttackConfig", "project", "run_attack"]


@dataclass
class AttackConfig:
    """Ball radius, inner iteration count, and ascent step size."""

    budget: float = 0.5
    steps: int = 10
    step_size: float = 0.05

    def __post_init__(self) -> None:
        if not self.budget > 0.0:
            raise ValueError(f"budget must be > 0, got {self.budget}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if not self.step_size > 0.0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")


def project(delta: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto the ball of the given radius."""
    if not budget > 0.0:
        raise ValueError(f"budget must be > 0, got {budget}")
    delta = np.asarray(delta, dtype=float)
    norm = float(np.linalg.norm(delta))
    if norm <= budget:
        return delta
    return delta * (budget / norm)


def run_attack(
    params: ToyModelParams,
    ref: ReferenceParams,
    sample: PreferenceSample,
    cfg: AttackConfig,
) -> np.ndarray:
    """Projected gradient ascent on log p(undesired | x+delta) from delta = 0."""
    delta = np.zeros(params.embed_dim)
    for _ in range(cfg.steps):
        grad = attack_objective_grad_delta(params, sample, delta)
        delta = project(delta + cfg.step_size * grad, cfg.budget)
    return delta
