"""Softmax action selection over instrumental values plus a Pavlovian bias."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class DecaySchedule:
    """``value(n) = max(floor, start * factor**n)``, advanced once per episode."""

    start: float
    factor: float
    floor: float

    def __post_init__(self):
        if not 0.0 < self.factor <= 1.0:
            raise ValueError("factor must lie in (0, 1]")
        if self.floor > self.start:
            raise ValueError("floor must not exceed start")

    def value(self, episode_index: int) -> float:
        return schedule_value(self, episode_index)


def schedule_value(sched: DecaySchedule, episode_index: int) -> float:
    if episode_index < 0:
        raise ValueError("episode_index must be >= 0")
    return max(sched.floor, sched.start * sched.factor**episode_index)


@dataclass(frozen=True)
class PolicyConfig:
    temperature: DecaySchedule = DecaySchedule(1.0, 0.999, 0.08)
    pav_weight: float = 1.0

    def __post_init__(self):
        if self.temperature.floor <= 0:
            raise ValueError("temperature floor must be positive")
        if self.pav_weight < 0:
            raise ValueError("pav_weight must be >= 0")


@njit(cache=True)
def action_scores(q_hybrid, q_pav_row, pav_weight, pav_enabled):
    if not pav_enabled:
        return q_hybrid.copy()
    return q_hybrid + pav_weight * q_pav_row


@njit(cache=True)
def softmax_kernel(scores, temperature):
    m = scores[0]
    for a in range(1, scores.shape[0]):
        if scores[a] > m:
            m = scores[a]
    p = np.exp((scores - m) / temperature)
    return p / p.sum()


def softmax_probs(scores, temperature: float) -> np.ndarray:
    """Max-shifted Boltzmann distribution over ``scores`` at ``temperature``."""
    scores = np.asarray(scores, dtype=float)
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    return softmax_kernel(scores, float(temperature))


@njit(cache=True)
def inverse_cdf(probs, u):
    """Index ``a`` with ``cdf[a-1] <= u < cdf[a]``; falls back to the last
    index with positive mass if rounding leaves ``u`` above the total."""
    c = 0.0
    last = 0
    for a in range(probs.shape[0]):
        if probs[a] > 0.0:
            last = a
        c += probs[a]
        if u < c:
            return a
    return last


def sample_action(probs, rng: np.random.Generator) -> int:
    return int(inverse_cdf(np.asarray(probs, dtype=float), rng.random()))
