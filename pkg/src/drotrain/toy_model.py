"""Tiny differentiable single-token preference model.

One softmax end to end: a prompt is mean-pooled over token embeddings,
optionally shifted by an embedding-space perturbation, projected to
vocabulary logits, and normalized.  Because responses are single tokens,
the preference losses are exact closed forms and every gradient is
hand-derivable through the mean-pooling and the softmax.

Loss menu:
  * cat:     log p(undesired | x+delta) - log p(desired | x+delta)
  * capo:    -(margin - 1/(2*beta))^2 on the reference-normalized
             log-ratio margin (quadratic preference loss)
  * utility: -log p(target | prompt), no perturbation

plus the attack objective log p(undesired | x+delta) that the
perturbation loop climbs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

import numpy as np

__all__ = [
    "LossKind",
    "ToyModelParams",
    "ReferenceParams",
    "PreferenceSample",
    "UtilitySample",
    "ParamGrad",
    "init_params",
    "forward",
    "cat_loss",
    "capo_loss",
    "utility_loss",
    "loss_grad_params",
    "loss_grad_delta",
    "attack_objective",
    "attack_objective_grad_delta",
    "save_params",
    "load_params",
]

DEFAULT_VOCAB = 16
DEFAULT_DIM = 8


class LossKind(str, Enum):
    CAT = "cat"
    CAPO = "capo"
    UTILITY = "utility"


@dataclass
class ToyModelParams:
    """Token embeddings (V x d) and output projection (d x V)."""

    embed: np.ndarray
    out: np.ndarray

    def __post_init__(self) -> None:
        self.embed = np.asarray(self.embed, dtype=float)
        self.out = np.asarray(self.out, dtype=float)
        if self.embed.ndim != 2 or self.out.ndim != 2:
            raise ValueError("embed and out must be matrices")
        v, d = self.embed.shape
        if self.out.shape != (d, v):
            raise ValueError(
                f"dimension mismatch: embed is {self.embed.shape}, out is {self.out.shape}"
            )
        if not (np.all(np.isfinite(self.embed)) and np.all(np.isfinite(self.out))):
            raise ValueError("parameters must be finite")

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embed.shape[1]

    def copy(self) -> "ToyModelParams":
        return ToyModelParams(embed=self.embed.copy(), out=self.out.copy())


class ReferenceParams(ToyModelParams):
    """Frozen snapshot of the model at training start."""

    def __post_init__(self) -> None:
        super().__post_init__()
        self.embed = self.embed.copy()
        self.out = self.out.copy()
        self.embed.setflags(write=False)
        self.out.setflags(write=False)

    @classmethod
    def freeze(cls, params: ToyModelParams) -> "ReferenceParams":
        return cls(embed=params.embed, out=params.out)


@dataclass(frozen=True)
class PreferenceSample:
    """Prompt token indices with a desired / undesired response pair."""

    prompt: Tuple[int, ...]
    desired: int
    undesired: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompt", tuple(int(t) for t in self.prompt))
        if self.desired == self.undesired:
            raise ValueError("desired and undesired tokens must differ")


@dataclass(frozen=True)
class UtilitySample:
    prompt: Tuple[int, ...]
    target: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "prompt", tuple(int(t) for t in self.prompt))


@dataclass
class ParamGrad:
    """Gradient container shaped like ToyModelParams."""

    embed: np.ndarray
    out: np.ndarray

    def scaled(self, c: float) -> "ParamGrad":
        return ParamGrad(embed=c * self.embed, out=c * self.out)

    def add_(self, other: "ParamGrad", weight: float = 1.0) -> None:
        self.embed += weight * other.embed
        self.out += weight * other.out


def init_params(
    vocab_size: int = DEFAULT_VOCAB,
    embed_dim: int = DEFAULT_DIM,
    seed: int = 0,
    scale: float = 0.1,
) -> ToyModelParams:
    """Zero-mean Gaussian draws, small enough to keep the softmax unsaturated."""
    rng = np.random.default_rng(seed)
    return ToyModelParams(
        embed=scale * rng.standard_normal((vocab_size, embed_dim)),
        out=scale * rng.standard_normal((embed_dim, vocab_size)),
    )


def _validate_prompt(params: ToyModelParams, prompt: Sequence[int]) -> None:
    if len(prompt) == 0:
        raise ValueError("prompt must be nonempty")
    for t in prompt:
        if not (0 <= t < params.vocab_size):
            raise ValueError(f"token index {t} out of range for vocab {params.vocab_size}")


def _pooled(params: ToyModelParams, prompt: Sequence[int], delta: np.ndarray) -> np.ndarray:
    return params.embed[list(prompt)].mean(axis=0) + delta


def forward(params: ToyModelParams, prompt: Sequence[int], delta: np.ndarray) -> np.ndarray:
    """Probability vector over the vocabulary for a perturbed prompt."""
    _validate_prompt(params, prompt)
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (params.embed_dim,):
        raise ValueError(f"delta must have shape ({params.embed_dim},), got {delta.shape}")
    logits = _pooled(params, prompt, delta) @ params.out
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    return p


def _log_softmax(params: ToyModelParams, prompt: Sequence[int], delta: np.ndarray) -> np.ndarray:
    _validate_prompt(params, prompt)
    logits = _pooled(params, prompt, np.asarray(delta, dtype=float)) @ params.out
    logits -= logits.max()
    return logits - math.log(float(np.exp(logits).sum()))


def cat_loss(
    params: ToyModelParams,
    ref: ReferenceParams,
    sample: PreferenceSample,
    delta: np.ndarray,
) -> float:
    """log p(undesired | x+delta) - log p(desired | x+delta).

    The reference model does not enter this loss; the argument is kept
    so all loss kinds share a call shape.
    """
    log_p = _log_softmax(params, sample.prompt, delta)
    return float(log_p[sample.undesired] - log_p[sample.desired])


def capo_loss(
    params: ToyModelParams,
    ref: ReferenceParams,
    sample: PreferenceSample,
    delta: np.ndarray,
    beta: float,
) -> float:
    """Quadratic preference loss -(margin - 1/(2*beta))^2.

    margin = [log p(y|x+delta) - log p0(y|x)] - [log p(yhat|x+delta) - log p0(yhat|x)]
    with p0 the frozen reference evaluated at the clean prompt.
    Minimizing drives the margin toward 1/(2*beta); the value is always
    <= 0 with equality exactly at the target margin.
    """
    if not beta > 0.0:
        raise ValueError(f"beta must be > 0, got {beta}")
    margin = _reference_margin(params, ref, sample, delta)
    return -((margin - 0.5 / beta) ** 2)


def _reference_margin(
    params: ToyModelParams,
    ref: ReferenceParams,
    sample: PreferenceSample,
    delta: np.ndarray,
) -> float:
    log_p = _log_softmax(params, sample.prompt, delta)
    zero = np.zeros(ref.embed_dim)
    log_p0 = _log_softmax(ref, sample.prompt, zero)
    return float(
        (log_p[sample.desired] - log_p0[sample.desired])
        - (log_p[sample.undesired] - log_p0[sample.undesired])
    )


def utility_loss(params: ToyModelParams, sample: UtilitySample) -> float:
    """Negative log-likelihood of the target token, clean prompt."""
    log_p = _log_softmax(params, sample.prompt, np.zeros(params.embed_dim))
    return float(-log_p[sample.target])


def attack_objective(params: ToyModelParams, sample: PreferenceSample, delta: np.ndarray) -> float:
    """log p(undesired | x+delta): what the perturbation loop maximizes."""
    log_p = _log_softmax(params, sample.prompt, delta)
    return float(log_p[sample.undesired])


def _backprop(
    params: ToyModelParams,
    prompt: Sequence[int],
    delta: np.ndarray,
    logit_grad: np.ndarray,
) -> Tuple[ParamGrad, np.ndarray]:
    """Chain rule for any loss whose logit gradient is known.

    h = mean-pooled embeddings + delta, z = h @ out:
      d/d out      = outer(h, logit_grad)
      d/d h        = out @ logit_grad
      d/d embed[v] = (count of v in prompt / len) * (d/d h)
      d/d delta    = d/d h
    """
    h = _pooled(params, prompt, delta)
    grad_out = np.outer(h, logit_grad)
    grad_h = params.out @ logit_grad
    grad_embed = np.zeros_like(params.embed)
    inv_len = 1.0 / len(prompt)
    for t in prompt:
        grad_embed[t] += inv_len * grad_h
    return ParamGrad(embed=grad_embed, out=grad_out), grad_h


def _logit_grad(
    kind: LossKind,
    params: ToyModelParams,
    ref: ReferenceParams,
    sample,
    delta: np.ndarray,
    beta: float,
) -> np.ndarray:
    v = params.vocab_size
    if kind is LossKind.CAT:
        g = np.zeros(v)
        g[sample.undesired] += 1.0
        g[sample.desired] -= 1.0
        return g
    if kind is LossKind.CAPO:
        margin = _reference_margin(params, ref, sample, delta)
        outer_grad = -2.0 * (margin - 0.5 / beta)
        g = np.zeros(v)
        g[sample.desired] += outer_grad
        g[sample.undesired] -= outer_grad
        return g
    if kind is LossKind.UTILITY:
        p = forward(params, sample.prompt, delta)
        g = p.copy()
        g[sample.target] -= 1.0
        return g
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_grad_params(
    kind: LossKind,
    params: ToyModelParams,
    ref: ReferenceParams,
    sample,
    delta: np.ndarray,
    beta: float = 0.25,
) -> ParamGrad:
    """Exact analytic gradient of the selected per-sample loss w.r.t. params.

    For the preference losses the softmax normalization cancels in the
    log-ratio, so the logit gradient is sparse; the utility NLL keeps
    the full softmax term.
    """
    delta = np.asarray(delta, dtype=float)
    grad, _ = _backprop(
        params, sample.prompt, delta, _logit_grad(kind, params, ref, sample, delta, beta)
    )
    return grad


def loss_grad_delta(
    kind: LossKind,
    params: ToyModelParams,
    ref: ReferenceParams,
    sample,
    delta: np.ndarray,
    beta: float = 0.25,
) -> np.ndarray:
    """Exact analytic gradient of the selected loss w.r.t. the perturbation."""
    delta = np.asarray(delta, dtype=float)
    return params.out @ _logit_grad(kind, params, ref, sample, delta, beta)


def attack_objective_grad_delta(
    params: ToyModelParams, sample: PreferenceSample, delta: np.ndarray
) -> np.ndarray:
    """Gradient of log p(undesired | x+delta) w.r.t. delta: out @ (e_undesired - p)."""
    delta = np.asarray(delta, dtype=float)
    p = forward(params, sample.prompt, delta)
    g = -p
    g[sample.undesired] += 1.0
    return params.out @ g


# --- checkpoint persistence -------------------------------------------------

_CKPT_HEADER = "drotrain-checkpoint v1"
_FLOAT_FMT = "%.17g"


def save_params(params: ToyModelParams, path) -> None:
    """Portable text checkpoint: dimensions plus row-major float arrays."""
    lines = [
        _CKPT_HEADER,
        f"vocab_size={params.vocab_size}",
        f"embed_dim={params.embed_dim}",
        "[embed]",
    ]
    for row in params.embed:
        lines.append(" ".join(_FLOAT_FMT % x for x in row))
    lines.append("[out]")
    for row in params.out:
        lines.append(" ".join(_FLOAT_FMT % x for x in row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path) -> ToyModelParams:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != _CKPT_HEADER:
        raise ValueError(f"{path}: not a {_CKPT_HEADER!r} file")
    vocab = int(lines[1].split("=", 1)[1])
    dim = int(lines[2].split("=", 1)[1])
    if lines[3] != "[embed]":
        raise ValueError(f"{path}: expected [embed] section")
    embed_rows = lines[4 : 4 + vocab]
    if lines[4 + vocab] != "[out]":
        raise ValueError(f"{path}: expected [out] section")
    out_rows = lines[5 + vocab : 5 + vocab + dim]
    embed = np.array([[float(x) for x in row.split()] for row in embed_rows])
    out = np.array([[float(x) for x in row.split()] for row in out_rows])
    if embed.shape != (vocab, dim) or out.shape != (dim, vocab):
        raise ValueError(f"{path}: array shapes disagree with declared dimensions")
    return ToyModelParams(embed=embed, out=out)
