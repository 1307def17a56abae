"""Tabular learners.

Every update works in place on numpy arrays and returns its prediction
error, so the same functions serve unit tests and the jitted episode loop.
Ties in ``max``/``argmax`` go to the lowest action index.

Table layouts::

    Q tables        (n_states, n_actions) float64
    V tables        (n_states,) float64
    traces          (n_states, n_actions) float64, entries in [0, 1]
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .policy import DecaySchedule

N_ACTIONS = 5
TRACE_CUTOFF = 1e-8


@dataclass(frozen=True)
class Hyper:
    alpha: DecaySchedule = DecaySchedule(0.55, 0.999, 0.08)
    gamma: float = 0.99
    trace_lambda: float = 0.9
    planning_steps: int = 4

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 <= self.trace_lambda <= 1.0:
            raise ValueError("trace_lambda must lie in [0, 1]")
        if self.planning_steps < 0:
            raise ValueError("planning_steps must be >= 0")


def new_q_table(n_states: int, n_actions: int = N_ACTIONS) -> np.ndarray:
    return np.zeros((n_states, n_actions))


def new_value_table(n_states: int) -> np.ndarray:
    return np.zeros(n_states)


class PavlovianTable(NamedTuple):
    """Cue-driven action values ``q`` and their state maxima ``v``."""

    q: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int = N_ACTIONS) -> "PavlovianTable":
        return cls(np.zeros((n_states, n_actions)), np.zeros(n_states))


class DynaModel(NamedTuple):
    """Last-observation transition memory plus visit counts.

    ``seen`` lists flattened ``s * n_actions + a`` keys in order of first
    visit; ``n_seen[0]`` is how many of them are valid.
    """

    next_state: np.ndarray  # (S, A) int64, -1 when unseen
    reward: np.ndarray  # (S, A)
    terminal: np.ndarray  # (S, A) bool
    count_sa: np.ndarray  # (S, A) int64
    count_sas: np.ndarray  # (S, A, S) int32
    seen: np.ndarray  # (S * A,) int64
    n_seen: np.ndarray  # (1,) int64

    @classmethod
    def empty(cls, n_states: int, n_actions: int = N_ACTIONS) -> "DynaModel":
        return cls(
            np.full((n_states, n_actions), -1, dtype=np.int64),
            np.zeros((n_states, n_actions)),
            np.zeros((n_states, n_actions), dtype=np.bool_),
            np.zeros((n_states, n_actions), dtype=np.int64),
            np.zeros((n_states, n_actions, n_states), dtype=np.int32),
            np.zeros(n_states * n_actions, dtype=np.int64),
            np.zeros(1, dtype=np.int64),
        )

    def seen_pairs(self) -> list[tuple[int, int]]:
        n_actions = self.next_state.shape[1]
        return [divmod(int(k), n_actions) for k in self.seen[: self.n_seen[0]]]


class EligibilityTraces(NamedTuple):
    """Replacing traces with a sparse list of the currently active pairs."""

    e: np.ndarray  # (S, A)
    keys: np.ndarray  # (S * A,) int64
    n_keys: np.ndarray  # (1,) int64

    @classmethod
    def zeros(cls, n_states: int, n_actions: int = N_ACTIONS) -> "EligibilityTraces":
        return cls(np.zeros((n_states, n_actions)), np.zeros(n_states * n_actions, dtype=np.int64),
                   np.zeros(1, dtype=np.int64))

    @property
    def active(self) -> bool:
        return bool(self.n_keys[0])

    def reset(self):
        reset_traces(self.e, self.keys, self.n_keys)


# Arbitration state is a float array: see the index constants below.
REL_MF, REL_MB, MAX_MF, MAX_MB, P_MB = range(5)


def new_arbitration() -> np.ndarray:
    """Fresh arbitration state: both reliabilities 0, ``p_mb = 0.5``."""
    arb = np.zeros(5)
    arb[P_MB] = 0.5
    return arb


@njit(cache=True)
def argmax_first(row):
    best = 0
    for a in range(1, row.shape[0]):
        if row[a] > row[best]:
            best = a
    return best


@njit(cache=True)
def td_v_update(v, s, r, s_next, alpha, gamma, terminal=False):
    boot = 0.0 if terminal else gamma * v[s_next]
    delta = r + boot - v[s]
    v[s] += alpha * delta
    return delta


@njit(cache=True)
def q_learning_update(q, s, a, r, s_next, alpha, gamma, terminal=False):
    boot = 0.0 if terminal else gamma * q[s_next, argmax_first(q[s_next])]
    rpe = r + boot - q[s, a]
    q[s, a] += alpha * rpe
    return rpe


@njit(cache=True)
def sarsa_update(q, traces, keys, n_keys, s, a, r, s_next, a_next, alpha, gamma, lam, use_traces, terminal=False):
    """One-step SARSA, or SARSA(lambda) with replacing traces when ``use_traces``.

    With traces the error is applied to every traced pair, then traces decay
    by ``gamma * lam``.  ``keys[:n_keys[0]]`` lists the pairs with a nonzero
    trace; traces that decay below ``TRACE_CUTOFF`` are dropped to zero.
    """
    boot = 0.0 if terminal else gamma * q[s_next, a_next]
    rpe = r + boot - q[s, a]
    if not use_traces:
        q[s, a] += alpha * rpe
        return rpe
    n_a = q.shape[1]
    if traces[s, a] == 0.0:
        keys[n_keys[0]] = s * n_a + a
        n_keys[0] += 1
    traces[s, a] = 1.0
    decay = gamma * lam
    kept = 0
    for k in range(n_keys[0]):
        key = keys[k]
        i = key // n_a
        j = key - i * n_a
        e = traces[i, j]
        q[i, j] += alpha * rpe * e
        e *= decay
        if e < TRACE_CUTOFF:
            traces[i, j] = 0.0
        else:
            traces[i, j] = e
            keys[kept] = key
            kept += 1
    n_keys[0] = kept
    return rpe


@njit(cache=True)
def reset_traces(traces, keys, n_keys):
    n_a = traces.shape[1]
    for k in range(n_keys[0]):
        key = keys[k]
        traces[key // n_a, key % n_a] = 0.0
    n_keys[0] = 0


@njit(cache=True)
def advantage(q, v, s, a):
    return q[s, a] - v[s]


@njit(cache=True)
def pavlovian_update(q_pav, v_pav, s, a, r_pav, s_next, alpha, gamma, terminal=False):
    """TD update of the cue critic; ``v_pav[s]`` tracks ``max_a q_pav[s, a]``."""
    boot = 0.0 if terminal else gamma * v_pav[s_next]
    delta = r_pav + boot - q_pav[s, a]
    q_pav[s, a] += alpha * delta
    v_pav[s] = q_pav[s, argmax_first(q_pav[s])]
    return delta


@njit(cache=True)
def state_prediction_error(count_sa, count_sas, s, a, s_observed):
    n = count_sa[s, a]
    if n == 0:
        return 1.0
    return 1.0 - count_sas[s, a, s_observed] / n


@njit(cache=True)
def dyna_observe(next_state, reward, terminal, count_sa, count_sas, seen, n_seen, s, a, r, s_next, done=False):
    n_actions = next_state.shape[1]
    if count_sa[s, a] == 0:
        seen[n_seen[0]] = s * n_actions + a
        n_seen[0] += 1
    next_state[s, a] = s_next
    reward[s, a] = r
    terminal[s, a] = done
    count_sa[s, a] += 1
    count_sas[s, a, s_next] += 1


@njit(cache=True)
def dyna_plan(next_state, reward, terminal, seen, n_seen, q, uniforms, alpha, gamma):
    """Replay ``len(uniforms)`` remembered transitions through Q-learning.

    Each uniform draw in [0, 1) picks one experienced pair.
    """
    n = n_seen[0]
    if n == 0:
        return
    n_actions = next_state.shape[1]
    for k in range(uniforms.shape[0]):
        idx = int(uniforms[k] * n)
        if idx >= n:
            idx = n - 1
        key = seen[idx]
        s = key // n_actions
        a = key - s * n_actions
        q_learning_update(q, s, a, reward[s, a], next_state[s, a], alpha, gamma, terminal[s, a])


@njit(cache=True)
def arbitration_update(arb, rpe, spe, ema_decay, sharpness):
    """EMA reliabilities, each normalised by its running maximum, into a sigmoid.

    Lower normalised error on one side pushes ``p_mb`` toward that system.
    """
    d = ema_decay
    arb[REL_MF] = (1.0 - d) * arb[REL_MF] + d * abs(rpe)
    arb[REL_MB] = (1.0 - d) * arb[REL_MB] + d * spe
    if arb[REL_MF] > arb[MAX_MF]:
        arb[MAX_MF] = arb[REL_MF]
    if arb[REL_MB] > arb[MAX_MB]:
        arb[MAX_MB] = arb[REL_MB]
    mf = arb[REL_MF] / arb[MAX_MF] if arb[MAX_MF] > 0.0 else 0.0
    mb = arb[REL_MB] / arb[MAX_MB] if arb[MAX_MB] > 0.0 else 0.0
    arb[P_MB] = 1.0 / (1.0 + np.exp(sharpness * (mb - mf)))
    return arb[P_MB]


@njit(cache=True)
def hybrid_q(q_mf, q_mb, p_mb, s):
    """``p_mb * Q_mb[s] + (1 - p_mb) * Q_mf[s]``, exact at both endpoints."""
    if p_mb == 1.0:
        return q_mb[s].copy()
    return q_mf[s] + p_mb * (q_mb[s] - q_mf[s])


# Convenience wrappers over the container types ----------------------------


def sarsa(q, traces: EligibilityTraces | None, s, a, r, s_next, a_next, alpha, gamma, lam=0.0, terminal=False):
    """SARSA on a Q table; pass ``traces=None`` for the one-step form."""
    if traces is None:
        dummy = EligibilityTraces.zeros(1, q.shape[1])
        return sarsa_update(q, dummy.e, dummy.keys, dummy.n_keys, s, a, r, s_next, a_next,
                            alpha, gamma, lam, False, terminal)
    return sarsa_update(q, traces.e, traces.keys, traces.n_keys, s, a, r, s_next, a_next,
                        alpha, gamma, lam, True, terminal)


def observe(model: DynaModel, s, a, r, s_next, done=False):
    dyna_observe(
        model.next_state, model.reward, model.terminal, model.count_sa, model.count_sas,
        model.seen, model.n_seen, s, a, r, s_next, done,
    )


def plan(model: DynaModel, q, k, alpha, gamma, rng: np.random.Generator):
    if k <= 0:
        return
    dyna_plan(model.next_state, model.reward, model.terminal, model.seen, model.n_seen, q,
              rng.random(k), alpha, gamma)


def spe(model: DynaModel, s, a, s_observed) -> float:
    return state_prediction_error(model.count_sa, model.count_sas, s, a, s_observed)
