"""Reward components and the pre-cue / post-cue phase switch.

Instrumental reward follows the beacon RSS and penalises collisions.
Pavlovian reward comes only from cues (gate entry, GPS-denied entry, NLOS).
Shaping adds ``gamma * phi(s') - phi(s)`` once a cue has been met.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

from numba import njit

# must match env_grid.CellKind
_GATE = 2
_GPS_DENIED = 3


@dataclass(frozen=True)
class RewardConfig:
    collision_penalty: float = 2.0  # subtracted
    gate_reward: float = 5.0
    gps_denied_penalty: float = -5.0
    nlos_penalty: float = -2.0
    rss_scale: float = 0.01  # per dB
    rss_reference: float = -40.0  # dBm
    terminal_bonus: float = 20.0

    def __post_init__(self):
        if self.rss_scale < 0:
            raise ValueError("rss_scale must be >= 0")


@dataclass(frozen=True)
class RewardBreakdown:
    instrumental: float
    pavlovian: float
    shaping: float
    total: float

    @classmethod
    def compose(cls, instrumental, pavlovian, shaping, pavlovian_weight=0.0):
        """``total`` is instrumental + shaping (+ weighted raw Pavlovian, 0 by default)."""
        return cls(instrumental, pavlovian, shaping, instrumental + shaping + pavlovian_weight * pavlovian)


@njit(cache=True)
def instrumental_kernel(rss, collided, mission_done, rss_scale, rss_reference, collision_penalty, terminal_bonus):
    r = rss_scale * (rss - rss_reference)
    if collided:
        r -= collision_penalty
    if mission_done:
        r += terminal_bonus
    return r


@njit(cache=True)
def pavlovian_kernel(kind_entered, entered, los_to_target, gate_reward, gps_penalty, nlos_penalty,
                     gate_available=True):
    r = 0.0
    if entered:
        if kind_entered == _GATE:
            if gate_available:
                r += gate_reward
        elif kind_entered == _GPS_DENIED:
            r += gps_penalty
    if not los_to_target:
        r += nlos_penalty
    return r


@njit(cache=True)
def shaping_kernel(phi_s, phi_next, gamma, terminal=False):
    if terminal:
        return -phi_s
    return gamma * phi_next - phi_s


def instrumental_reward(cfg: RewardConfig, rss: float, collided: bool, mission_done: bool) -> float:
    return instrumental_kernel(rss, collided, mission_done, cfg.rss_scale, cfg.rss_reference,
                               cfg.collision_penalty, cfg.terminal_bonus)


def pavlovian_reward(cfg: RewardConfig, cell_kind, los_to_target: bool, entered: bool = True,
                     gate_available: bool = True) -> float:
    """Cue reward for the cell just moved into.

    Gate / GPS-denied values fire only on entry (``entered=False`` when the
    agent hovered or was blocked); the NLOS penalty applies every step.
    The training loop pays the gate value once per agent per episode
    (``gate_available``) so that stepping in and out of a gate is not a
    reward source.
    """
    return pavlovian_kernel(int(cell_kind), entered, los_to_target, cfg.gate_reward,
                            cfg.gps_denied_penalty, cfg.nlos_penalty, gate_available)


def shaping_reward(phi, s, s_next, gamma: float, terminal: bool = False) -> float:
    return shaping_kernel(phi[s], phi[s_next], gamma, terminal)


def is_cue(cell_kind, entered: bool) -> bool:
    return entered and int(cell_kind) in (_GATE, _GPS_DENIED)


class Phase(IntEnum):
    PRE_CUE = 0
    POST_CUE = 1


@dataclass(frozen=True)
class CuePhase:
    phase: Phase = Phase.PRE_CUE
    switch_step: int | None = None


def cue_phase_step(phase: CuePhase, entered_cue: bool, step: int) -> CuePhase:
    """Latch into POST_CUE at the first cue; never reverts within an episode."""
    if phase.phase == Phase.PRE_CUE and entered_cue:
        return replace(phase, phase=Phase.POST_CUE, switch_step=step)
    return phase
