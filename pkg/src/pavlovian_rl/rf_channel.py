"""Radio model: line of sight, log-distance path loss, RSS, noise floor,
GPS-denied position noise and the RSS position error bound (PEB)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit
from scipy.constants import speed_of_light

# must match env_grid.CellKind.OBSTACLE
_OBSTACLE = 1

REFERENCE_DISTANCE = 1.0
SAME_CELL_DISTANCE = 0.5


@dataclass(frozen=True)
class LinkBudget:
    tx_power: float = -10.0  # dBm
    tx_gain: float = 2.0  # dBi
    rx_gain: float = 2.0  # dBi
    bandwidth: float = 1e6  # Hz
    carrier_frequency: float = 2.4e9  # Hz
    noise_figure: float = 10.0  # dB
    beta_los: float = 2.0
    beta_nlos: float = 3.5

    def __post_init__(self):
        if self.bandwidth <= 0 or self.carrier_frequency <= 0:
            raise ValueError("bandwidth and carrier_frequency must be positive")
        if not (self.beta_nlos >= self.beta_los > 0):
            raise ValueError("need beta_nlos >= beta_los > 0")

    def beta(self, los: bool) -> float:
        return self.beta_los if los else self.beta_nlos


class TerminationMode(str, Enum):
    PEB = "peb"
    PROXIMITY = "proximity"


@dataclass(frozen=True)
class TerminationConfig:
    mode: TerminationMode = TerminationMode.PEB
    peb_threshold: float = 1.0  # m
    rss_noise_sigma: float = 6.0  # dB
    min_agents: int = 4
    range_cells: int = 4

    def __post_init__(self):
        object.__setattr__(self, "mode", TerminationMode(self.mode))
        if self.peb_threshold <= 0:
            raise ValueError("peb_threshold must be positive")
        if self.rss_noise_sigma <= 0:
            raise ValueError("rss_noise_sigma must be positive")
        if self.min_agents < 1 or self.range_cells < 0:
            raise ValueError("min_agents must be >= 1 and range_cells >= 0")


@dataclass(frozen=True)
class GpsNoiseModel:
    variance_per_axis: float = 100.0  # m^2

    def __post_init__(self):
        if self.variance_per_axis < 0:
            raise ValueError("variance_per_axis must be non-negative")


@dataclass(frozen=True)
class ChannelSample:
    rss: float
    los: bool
    distance: float


@njit(cache=True)
def supercover_blocked(cells, x0, y0, x1, y1):
    """True if any Obstacle cell lies on the supercover of the segment
    between two cell centres.  Endpoints are not tested.

    Corner crossings visit both cells adjacent to the corner.
    """
    dx = x1 - x0
    dy = y1 - y0
    xstep = 1 if dx >= 0 else -1
    ystep = 1 if dy >= 0 else -1
    adx = abs(dx)
    ady = abs(dy)
    ddx = 2 * adx
    ddy = 2 * ady
    x = x0
    y = y0
    if ddx >= ddy:
        error = adx
        errorprev = adx
        for _ in range(adx):
            x += xstep
            error += ddy
            if error > ddx:
                y += ystep
                error -= ddx
                if error + errorprev < ddx:
                    if cells[y - ystep, x] == _OBSTACLE:
                        return True
                elif error + errorprev > ddx:
                    if cells[y, x - xstep] == _OBSTACLE:
                        return True
                else:
                    if cells[y - ystep, x] == _OBSTACLE or cells[y, x - xstep] == _OBSTACLE:
                        return True
            if not (x == x1 and y == y1) and cells[y, x] == _OBSTACLE:
                return True
            errorprev = error
    else:
        error = ady
        errorprev = ady
        for _ in range(ady):
            y += ystep
            error += ddx
            if error > ddy:
                x += xstep
                error -= ddy
                if error + errorprev < ddy:
                    if cells[y, x - xstep] == _OBSTACLE:
                        return True
                elif error + errorprev > ddy:
                    if cells[y - ystep, x] == _OBSTACLE:
                        return True
                else:
                    if cells[y, x - xstep] == _OBSTACLE or cells[y - ystep, x] == _OBSTACLE:
                        return True
            if not (x == x1 and y == y1) and cells[y, x] == _OBSTACLE:
                return True
            errorprev = error
    return False


def line_of_sight(grid, a, b) -> bool:
    """Supercover LOS between two cells; Gate cells are openings, not walls."""
    return not supercover_blocked(grid.cells, int(a[0]), int(a[1]), int(b[0]), int(b[1]))


def los_to_cell(grid, target=None) -> np.ndarray:
    """Flat ``(n_states,)`` mask of cells with LOS to ``target`` (default: map target)."""
    tx, ty = grid.target if target is None else target
    out = np.zeros(grid.n_states, dtype=np.bool_)
    for y in range(grid.height):
        for x in range(grid.width):
            out[y * grid.width + x] = not supercover_blocked(grid.cells, x, y, tx, ty)
    return out


def cell_distance(a, b) -> float:
    d = math.hypot(a[0] - b[0], a[1] - b[1])
    return d if d > 0 else SAME_CELL_DISTANCE


def path_loss_db(link: LinkBudget, d: float, los: bool) -> float:
    if d <= 0:
        raise ValueError("distance must be positive")
    d0 = REFERENCE_DISTANCE
    free_space = 20.0 * math.log10(4.0 * math.pi * d0 * link.carrier_frequency / speed_of_light)
    return free_space + 10.0 * link.beta(los) * math.log10(d / d0)


def rss_dbm(link: LinkBudget, d: float, los: bool) -> float:
    return link.tx_power + link.tx_gain + link.rx_gain - path_loss_db(link, d, los)


def noise_floor_dbm(link: LinkBudget) -> float:
    return -174.0 + 10.0 * math.log10(link.bandwidth) + link.noise_figure


def channel_sample(grid, link: LinkBudget, cell, target=None) -> ChannelSample:
    target = grid.target if target is None else target
    los = line_of_sight(grid, cell, target)
    d = cell_distance(cell, target)
    return ChannelSample(rss_dbm(link, d, los), los, d)


def rss_field(grid, link: LinkBudget) -> np.ndarray:
    """Flat ``(n_states,)`` array of RSS in dBm at each cell centre."""
    los = los_to_cell(grid)
    tx, ty = grid.target
    out = np.empty(grid.n_states)
    for s in range(grid.n_states):
        x, y = s % grid.width, s // grid.width
        out[s] = rss_dbm(link, cell_distance((x, y), (tx, ty)), bool(los[s]))
    return out


def gps_estimate(true_pos, in_denied: bool, model: GpsNoiseModel, rng: np.random.Generator) -> np.ndarray:
    pos = np.asarray(true_pos, dtype=float)
    if not in_denied:
        return pos.copy()
    return pos + rng.normal(0.0, math.sqrt(model.variance_per_axis), size=pos.shape)


def fisher_contributions(grid, link: LinkBudget, sigma_db: float, target=None) -> np.ndarray:
    """Per-cell RSS Fisher information about the target position.

    Returns ``(n_states, 3)`` holding ``(Jxx, Jxy, Jyy)`` for an agent sitting
    at each cell.  An agent on the target cell has no bearing and contributes
    nothing.
    """
    if sigma_db <= 0:
        raise ValueError("sigma_db must be positive")
    target = grid.target if target is None else target
    los = los_to_cell(grid, target)
    out = np.zeros((grid.n_states, 3))
    tx, ty = target
    for s in range(grid.n_states):
        x, y = s % grid.width, s // grid.width
        out[s] = _fim_term(x - tx, y - ty, link.beta(bool(los[s])), sigma_db)
    return out


def _fim_term(ux, uy, beta, sigma_db):
    d2 = ux * ux + uy * uy
    if d2 == 0:
        return (0.0, 0.0, 0.0)
    k = 10.0 * beta / (sigma_db * math.log(10.0))
    w = k * k / d2 / d2  # k^2 / d^2 times the unit-vector outer product (1/d^2)
    return (w * ux * ux, w * ux * uy, w * uy * uy)


@njit(cache=True)
def peb_from_fim(jxx, jxy, jyy):
    det = jxx * jyy - jxy * jxy
    tr = jxx + jyy
    if tr <= 0.0 or det <= 1e-12 * tr * tr:
        return np.inf
    return np.sqrt(tr / det)


def peb(grid, agent_cells, target, link: LinkBudget, sigma_db: float) -> float:
    """Position error bound ``sqrt(trace(J^-1))`` for RSS ranging from the agents."""
    if len(agent_cells) < 1:
        raise ValueError("need at least one agent")
    if sigma_db <= 0:
        raise ValueError("sigma_db must be positive")
    j = np.zeros(3)
    for c in agent_cells:
        los = line_of_sight(grid, c, target)
        j += _fim_term(c[0] - target[0], c[1] - target[1], link.beta(los), sigma_db)
    return float(peb_from_fim(j[0], j[1], j[2]))
