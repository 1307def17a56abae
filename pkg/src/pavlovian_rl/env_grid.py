"""Discrete multi-agent grid world.

Cells are addressed as ``(x, y)`` with ``x`` to the right and ``y`` upward.
Internally a cell is also a flat state index ``s = y * width + x``; the
learning tables are indexed by that integer.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from numba import njit

from .rf_channel import TerminationConfig, TerminationMode, line_of_sight


class CellKind(IntEnum):
    FREE = 0
    OBSTACLE = 1
    GATE = 2
    GPS_DENIED = 3


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    HOVER = 4


class TerminationCause(IntEnum):
    NONE = 0
    MISSION_ACCOMPLISHED = 1
    STEP_LIMIT = 2


N_ACTIONS = len(Action)

# (dx, dy) per action, in Action order
MOVES = np.array([(0, 1), (0, -1), (-1, 0), (1, 0), (0, 0)], dtype=np.int64)

_CHAR_TO_KIND = {
    ".": CellKind.FREE,
    "#": CellKind.OBSTACLE,
    "G": CellKind.GATE,
    "D": CellKind.GPS_DENIED,
    "T": CellKind.FREE,
}
_KIND_TO_CHAR = {CellKind.FREE: ".", CellKind.OBSTACLE: "#", CellKind.GATE: "G", CellKind.GPS_DENIED: "D"}

DEFAULT_MAP_PATH = Path(__file__).parent / "data" / "beacon_room.map"


class MapError(ValueError):
    """Raised when a map document cannot be parsed into a valid GridMap."""


@dataclass(frozen=True, eq=False)
class GridMap:
    """Occupancy grid with cue cells, agent starts and a static target.

    ``cells`` has shape ``(height, width)`` and is indexed ``cells[y, x]``.
    """

    width: int
    height: int
    cells: np.ndarray
    agent_starts: tuple[tuple[int, int], ...]
    target: tuple[int, int]
    _next_state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.int8)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "_next_state", _build_next_state(cells))

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def n_agents(self) -> int:
        return len(self.agent_starts)

    def kind(self, cell) -> CellKind:
        x, y = cell
        return CellKind(int(self.cells[y, x]))

    def in_bounds(self, cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def traversable(self, cell) -> bool:
        return self.in_bounds(cell) and self.kind(cell) != CellKind.OBSTACLE

    def state_index(self, cell) -> int:
        x, y = cell
        return int(y) * self.width + int(x)

    def cell_of(self, s: int) -> tuple[int, int]:
        return int(s) % self.width, int(s) // self.width

    @property
    def kinds_flat(self) -> np.ndarray:
        return self.cells.reshape(-1)

    @property
    def next_state(self) -> np.ndarray:
        """``(n_states, 5)`` table of attempted destinations (blocked moves stay)."""
        return self._next_state

    def cells_of_kind(self, kind: CellKind) -> list[tuple[int, int]]:
        ys, xs = np.nonzero(self.cells == kind)
        return sorted(zip(xs.tolist(), ys.tolist()))

    def __eq__(self, other):
        if not isinstance(other, GridMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.cells, other.cells)
            and self.agent_starts == other.agent_starts
            and self.target == other.target
        )

    __hash__ = None


def _build_next_state(cells: np.ndarray) -> np.ndarray:
    height, width = cells.shape
    nxt = np.empty((height * width, N_ACTIONS), dtype=np.int64)
    for y in range(height):
        for x in range(width):
            s = y * width + x
            for a, (dx, dy) in enumerate(MOVES):
                nx, ny = x + dx, y + dy
                if 0 <= nx < width and 0 <= ny < height and cells[ny, nx] != CellKind.OBSTACLE:
                    nxt[s, a] = ny * width + nx
                else:
                    nxt[s, a] = s
    return nxt


def load_map(text: str) -> GridMap:
    """Parse an ASCII map document (top line is the highest ``y``)."""
    rows = text.split("\n")
    if rows and rows[-1] == "":
        rows = rows[:-1]
    if not rows:
        raise MapError("empty map document")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MapError("map is not rectangular")
    height = len(rows)
    if width < 3 or height < 3:
        raise MapError("map must be at least 3x3")

    cells = np.zeros((height, width), dtype=np.int8)
    starts: dict[int, tuple[int, int]] = {}
    target = None
    for row_idx, row in enumerate(rows):
        y = height - 1 - row_idx
        for x, ch in enumerate(row):
            if ch.isdigit() and ch != "0":
                label = int(ch)
                if label in starts:
                    raise MapError(f"duplicate agent digit {ch!r}")
                starts[label] = (x, y)
                cells[y, x] = CellKind.FREE
            elif ch in _CHAR_TO_KIND:
                cells[y, x] = _CHAR_TO_KIND[ch]
                if ch == "T":
                    if target is not None:
                        raise MapError("more than one target")
                    target = (x, y)
            else:
                raise MapError(f"unknown map character {ch!r} at ({x}, {y})")

    if target is None:
        raise MapError("missing target 'T'")
    ring = np.concatenate([cells[0, :], cells[-1, :], cells[:, 0], cells[:, -1]])
    if np.any(ring != CellKind.OBSTACLE):
        # an agent or target on the ring lands here too
        raise MapError("boundary ring must be obstacles")
    return GridMap(width, height, cells, tuple(starts[k] for k in sorted(starts)), target)


def dump_map(grid: GridMap) -> str:
    """Serialize a GridMap back into the ASCII map format."""
    chars = [[_KIND_TO_CHAR[CellKind(int(k))] for k in row] for row in grid.cells]
    tx, ty = grid.target
    chars[ty][tx] = "T"
    for i, (x, y) in enumerate(grid.agent_starts, start=1):
        chars[y][x] = str(i)
    return "".join("".join(chars[y]) + "\n" for y in range(grid.height - 1, -1, -1))


def load_map_file(path) -> GridMap:
    return load_map(Path(path).read_text(encoding="utf-8"))


def default_map() -> GridMap:
    """The bundled 36x24 scenario with four agents, gates at x=26 and target (30, 12)."""
    return load_map_file(DEFAULT_MAP_PATH)


def attempted_cell(grid: GridMap, cell, action) -> tuple[int, int]:
    dx, dy = MOVES[int(action)]
    dest = (cell[0] + int(dx), cell[1] + int(dy))
    if grid.traversable(dest):
        return dest
    return tuple(cell)


@dataclass(frozen=True)
class EnvState:
    agent_cells: tuple[tuple[int, int], ...]
    step_index: int = 0


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    collided: tuple[bool, ...]
    terminal: bool = False
    termination_cause: TerminationCause = TerminationCause.NONE


@njit(cache=True)
def resolve_moves(cells, actions, next_state):
    """Simultaneous move resolution with freeze-and-propagate.

    ``cells`` and ``actions`` are per-agent state indices and action ids.
    Returns ``(new_cells, collided)``.  An agent freezes when its move is
    blocked by the map, when another agent targets the same cell, when two
    agents try to swap, or when its destination is held by a frozen agent.
    Iterates until no further agent freezes.
    """
    n = cells.shape[0]
    dest = np.empty(n, dtype=np.int64)
    frozen = np.zeros(n, dtype=np.bool_)
    collided = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        dest[i] = next_state[cells[i], actions[i]]
        if dest[i] == cells[i]:
            frozen[i] = True
            collided[i] = actions[i] != 4

    # each round decides every agent against the same snapshot, so the
    # outcome does not depend on agent order
    freeze = np.zeros(n, dtype=np.bool_)
    changed = True
    while changed:
        changed = False
        for i in range(n):
            freeze[i] = False
            if frozen[i]:
                continue
            for j in range(n):
                if j == i:
                    continue
                held_j = cells[j] if frozen[j] else dest[j]
                swap = (not frozen[j]) and dest[j] == cells[i] and dest[i] == cells[j]
                if held_j == dest[i] or swap:
                    freeze[i] = True
                    break
        for i in range(n):
            if freeze[i]:
                frozen[i] = True
                collided[i] = True
                changed = True

    new_cells = np.empty(n, dtype=np.int64)
    for i in range(n):
        new_cells[i] = cells[i] if frozen[i] else dest[i]
    return new_cells, collided


def apply_joint_action(grid: GridMap, state: EnvState, actions) -> StepOutcome:
    """Move all agents at once; terminal flags are left to :func:`is_terminal`."""
    if len(actions) != len(state.agent_cells):
        raise ValueError(f"expected {len(state.agent_cells)} actions, got {len(actions)}")
    cells = np.array([grid.state_index(c) for c in state.agent_cells], dtype=np.int64)
    acts = np.array([int(a) for a in actions], dtype=np.int64)
    new_cells, collided = resolve_moves(cells, acts, grid.next_state)
    nxt = EnvState(tuple(grid.cell_of(s) for s in new_cells), state.step_index + 1)
    return StepOutcome(nxt, tuple(bool(c) for c in collided))


def chebyshev(a, b) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def is_terminal(
    grid: GridMap,
    state: EnvState,
    criterion: TerminationConfig,
    peb_value: float = float("inf"),
    max_steps: int = 800,
) -> tuple[bool, TerminationCause]:
    if criterion.mode == TerminationMode.PEB:
        done = peb_value <= criterion.peb_threshold
    else:
        in_range = sum(
            1
            for c in state.agent_cells
            if chebyshev(c, grid.target) <= criterion.range_cells and line_of_sight(grid, c, grid.target)
        )
        done = in_range >= criterion.min_agents
    if done:
        return True, TerminationCause.MISSION_ACCOMPLISHED
    if state.step_index >= max_steps:
        return True, TerminationCause.STEP_LIMIT
    return False, TerminationCause.NONE
