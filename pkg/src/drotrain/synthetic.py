"""Seeded heavy-tail preference task for the desk-scale training loop.

The dataset is built against the model's own seeded initialization: 90%
"easy" samples whose prompts pool to an embedding aligned with the
desired token's output column, and 10% "hard" samples whose prompts
align with the undesired token's column instead.  At initialization the
hard minority therefore carries the high adversarial losses, giving the
loss distribution the rare-but-heavy tail that robust reweighting is
meant to target.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .toy_model import PreferenceSample, ToyModelParams, UtilitySample, init_params

__all__ = ["TaskConfig", "make_heavy_tail_task"]

_CANDIDATES_PER_SAMPLE = 8


@dataclass
class TaskConfig:
    n_adv: int = 200
    n_util: int = 128
    hard_fraction: float = 0.1
    prompt_len: int = 3

    def __post_init__(self) -> None:
        if self.n_adv < 1:
            raise ValueError(f"n_adv must be >= 1, got {self.n_adv}")
        if self.n_util < 0:
            raise ValueError(f"n_util must be >= 0, got {self.n_util}")
        if not (0.0 <= self.hard_fraction <= 1.0):
            raise ValueError(f"hard_fraction must be in [0, 1], got {self.hard_fraction}")
        if self.prompt_len < 1:
            raise ValueError(f"prompt_len must be >= 1, got {self.prompt_len}")


def _margin(params: ToyModelParams, prompt: Tuple[int, ...], desired: int, undesired: int) -> float:
    h = params.embed[list(prompt)].mean(axis=0)
    logits = h @ params.out
    return float(logits[desired] - logits[undesired])


def _pick_prompt(
    params: ToyModelParams,
    rng: np.random.Generator,
    desired: int,
    undesired: int,
    prompt_len: int,
    want_hard: bool,
) -> Tuple[int, ...]:
    """Draw candidate prompts from the token pool aligned with the target
    column and keep the one with the most extreme initial margin."""
    vocab = params.vocab_size
    direction = params.out[:, undesired] - params.out[:, desired]
    alignment = params.embed @ direction
    order = np.argsort(alignment)
    pool = order[-(vocab // 2) :] if want_hard else order[: vocab // 2]

    best_prompt: Tuple[int, ...] | None = None
    best_score = -np.inf
    for _ in range(_CANDIDATES_PER_SAMPLE):
        prompt = tuple(int(t) for t in rng.choice(pool, size=prompt_len, replace=True))
        m = _margin(params, prompt, desired, undesired)
        score = -m if want_hard else m
        if score > best_score:
            best_score = score
            best_prompt = prompt
    assert best_prompt is not None
    return best_prompt


def make_heavy_tail_task(
    task: TaskConfig,
    vocab_size: int,
    embed_dim: int,
    seed: int,
) -> Tuple[List[PreferenceSample], List[UtilitySample]]:
    """Build the adversarial and utility datasets for a given model seed.

    Uses the same deterministic initialization the trainer will use for
    that seed, so easy/hard labels refer to the actual starting model.
    """
    params0 = init_params(vocab_size, embed_dim, seed=seed)
    rng = np.random.default_rng([seed, 0xDA7A])

    n_hard = int(round(task.hard_fraction * task.n_adv))
    hardness = np.zeros(task.n_adv, dtype=bool)
    hardness[:n_hard] = True
    rng.shuffle(hardness)

    adv: List[PreferenceSample] = []
    for want_hard in hardness:
        desired, undesired = rng.choice(vocab_size, size=2, replace=False)
        prompt = _pick_prompt(
            params0, rng, int(desired), int(undesired), task.prompt_len, bool(want_hard)
        )
        adv.append(
            PreferenceSample(prompt=prompt, desired=int(desired), undesired=int(undesired))
        )

    util: List[UtilitySample] = []
    for _ in range(task.n_util):
        prompt = tuple(int(t) for t in rng.integers(0, vocab_size, size=task.prompt_len))
        target = int(rng.integers(0, vocab_size))
        util.append(UtilitySample(prompt=prompt, target=target))
    return adv, util
