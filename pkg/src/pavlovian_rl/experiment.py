"""Training loop, the four learning conditions and Monte Carlo aggregation.

Each agent learns privately over its own grid cell.  All agents share one
episode clock and one termination event.  The per-step loop runs in a
jitted kernel; everything around it (seeding, schedules, snapshots,
aggregation) is plain Python.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np
from numba import njit

from . import learning as lc
from .env_grid import N_ACTIONS, CellKind, GridMap, TerminationCause, load_map_file, default_map, resolve_moves
from .learning import Hyper
from .policy import PolicyConfig, inverse_cdf, softmax_kernel
from .rewards import RewardConfig, instrumental_kernel, pavlovian_kernel, shaping_kernel
from .rf_channel import (
    GpsNoiseModel,
    LinkBudget,
    TerminationConfig,
    TerminationMode,
    fisher_contributions,
    gps_estimate,
    los_to_cell,
    peb_from_fim,
    rss_field,
)

log = logging.getLogger(__name__)


class Condition(str, Enum):
    INSTRUMENTAL_ONLY = "instrumental_only"
    PAVLOVIAN_INSTRUMENTAL = "pavlovian_instrumental"
    INSTRUMENTAL_MODEL_BASED = "instrumental_model_based"
    FULL_HYBRID = "full_hybrid"

    @property
    def pavlovian(self) -> bool:
        return self in (Condition.PAVLOVIAN_INSTRUMENTAL, Condition.FULL_HYBRID)

    @property
    def model_based(self) -> bool:
        return self in (Condition.INSTRUMENTAL_MODEL_BASED, Condition.FULL_HYBRID)


ALL_CONDITIONS = tuple(Condition)


@dataclass(frozen=True)
class ArbitrationConfig:
    ema_decay: float = 0.1
    sharpness: float = 5.0

    def __post_init__(self):
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")
        if self.sharpness <= 0:
            raise ValueError("sharpness must be positive")


@dataclass(frozen=True)
class RunConfig:
    map_path: str | None = None  # None: bundled scenario
    episodes: int = 2400
    max_steps: int = 800
    monte_carlo_runs: int = 60
    base_seed: int = 0
    condition: Condition = Condition.FULL_HYBRID
    hyper: Hyper = field(default_factory=Hyper)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    link: LinkBudget = field(default_factory=LinkBudget)
    termination: TerminationConfig = field(default_factory=TerminationConfig)
    arbitration: ArbitrationConfig = field(default_factory=ArbitrationConfig)
    gps: GpsNoiseModel = field(default_factory=GpsNoiseModel)
    snapshot_episodes: tuple[int, ...] = (1, 400)
    smoothing_window: int = 1
    persist_cue_phase: bool = True
    shaping: bool = True
    phase_switch: bool = True

    def __post_init__(self):
        object.__setattr__(self, "condition", Condition(self.condition))
        object.__setattr__(self, "snapshot_episodes", tuple(int(e) for e in self.snapshot_episodes))
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.monte_carlo_runs < 1:
            raise ValueError("monte_carlo_runs must be >= 1")
        if any(e < 1 for e in self.snapshot_episodes):
            raise ValueError("snapshot_episodes must be >= 1")
        if self.smoothing_window < 1:
            raise ValueError("smoothing_window must be >= 1")

    def load_grid(self) -> GridMap:
        return default_map() if self.map_path is None else load_map_file(self.map_path)


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int  # 1-based
    steps: int
    cause: TerminationCause
    instrumental: tuple[float, ...]
    pavlovian: tuple[float, ...]
    collisions: int
    p_mb_mean: float | None = None


# ---------------------------------------------------------------------------
# jitted state


class EnvArrays(NamedTuple):
    next_state: np.ndarray  # (S, A)
    kinds: np.ndarray  # (S,)
    los: np.ndarray  # (S,)
    rss: np.ndarray  # (S,) dBm
    fim: np.ndarray  # (S, 3)
    cheb: np.ndarray  # (S,) Chebyshev distance to target
    starts: np.ndarray  # (n_agents,)


class Params(NamedTuple):
    pavlovian: bool
    model_based: bool
    peb_mode: bool
    max_steps: int
    planning_steps: int
    min_agents: int
    range_cells: int
    alpha: float
    gamma: float
    trace_lambda: float
    temperature: float
    pav_weight: float
    peb_threshold: float
    ema_decay: float
    sharpness: float
    rss_scale: float
    rss_reference: float
    collision_penalty: float
    terminal_bonus: float
    gate_reward: float
    gps_penalty: float
    nlos_penalty: float
    shaping: bool
    phase_switch: bool


class Tables(NamedTuple):
    q_mf: np.ndarray
    q_mb: np.ndarray
    q_pav: np.ndarray
    v_pav: np.ndarray
    traces: np.ndarray
    trace_keys: np.ndarray
    n_trace_keys: np.ndarray
    m_next: np.ndarray
    m_reward: np.ndarray
    m_terminal: np.ndarray
    m_count_sa: np.ndarray
    m_count_sas: np.ndarray
    m_seen: np.ndarray
    m_n_seen: np.ndarray
    arb: np.ndarray
    phase: np.ndarray  # (n_agents,) cue phase, 0 pre / 1 post
    gate_paid: np.ndarray  # (n_agents,) gate reward already paid this episode


def new_tables(n_agents: int, n_states: int, model_based: bool = True) -> Tables:
    a = N_ACTIONS
    # the (S, A, S) count tensor only matters with a model
    ms = n_states if model_based else 1
    arb = np.zeros((n_agents, 5))
    arb[:, lc.P_MB] = 0.5
    return Tables(
        q_mf=np.zeros((n_agents, n_states, a)),
        q_mb=np.zeros((n_agents, n_states, a)),
        q_pav=np.zeros((n_agents, n_states, a)),
        v_pav=np.zeros((n_agents, n_states)),
        traces=np.zeros((n_agents, n_states, a)),
        trace_keys=np.zeros((n_agents, n_states * a), dtype=np.int64),
        n_trace_keys=np.zeros((n_agents, 1), dtype=np.int64),
        m_next=np.full((n_agents, ms, a), -1, dtype=np.int64),
        m_reward=np.zeros((n_agents, ms, a)),
        m_terminal=np.zeros((n_agents, ms, a), dtype=np.bool_),
        m_count_sa=np.zeros((n_agents, ms, a), dtype=np.int64),
        m_count_sas=np.zeros((n_agents, ms, a, ms), dtype=np.int32),
        m_seen=np.zeros((n_agents, ms * a), dtype=np.int64),
        m_n_seen=np.zeros((n_agents, 1), dtype=np.int64),
        arb=arb,
        phase=np.zeros(n_agents, dtype=np.int64),
        gate_paid=np.zeros(n_agents, dtype=np.bool_),
    )


def env_arrays(grid: GridMap, link: LinkBudget, termination: TerminationConfig) -> EnvArrays:
    s = np.arange(grid.n_states)
    tx, ty = grid.target
    cheb = np.maximum(np.abs(s % grid.width - tx), np.abs(s // grid.width - ty))
    return EnvArrays(
        next_state=grid.next_state,
        kinds=grid.kinds_flat.astype(np.int64),
        los=los_to_cell(grid),
        rss=rss_field(grid, link),
        fim=fisher_contributions(grid, link, termination.rss_noise_sigma),
        cheb=cheb.astype(np.int64),
        starts=np.array([grid.state_index(c) for c in grid.agent_starts], dtype=np.int64),
    )


def make_params(config: RunConfig, episode_index: int) -> Params:
    cond, h, rw, t = config.condition, config.hyper, config.rewards, config.termination
    return Params(
        pavlovian=bool(cond.pavlovian),
        model_based=bool(cond.model_based),
        peb_mode=bool(t.mode == TerminationMode.PEB),
        max_steps=int(config.max_steps),
        planning_steps=int(h.planning_steps) if cond.model_based else 0,
        min_agents=int(t.min_agents),
        range_cells=int(t.range_cells),
        alpha=float(h.alpha.value(episode_index)),
        gamma=float(h.gamma),
        trace_lambda=float(h.trace_lambda),
        temperature=float(config.policy.temperature.value(episode_index)),
        pav_weight=float(config.policy.pav_weight),
        peb_threshold=float(t.peb_threshold),
        ema_decay=float(config.arbitration.ema_decay),
        sharpness=float(config.arbitration.sharpness),
        rss_scale=float(rw.rss_scale),
        rss_reference=float(rw.rss_reference),
        collision_penalty=float(rw.collision_penalty),
        terminal_bonus=float(rw.terminal_bonus),
        gate_reward=float(rw.gate_reward),
        gps_penalty=float(rw.gps_denied_penalty),
        nlos_penalty=float(rw.nlos_penalty),
        shaping=bool(config.shaping),
        phase_switch=bool(config.phase_switch),
    )


@njit(cache=True)
def _scores(tb, i, s, prm):
    if prm.model_based:
        q = lc.hybrid_q(tb.q_mf[i], tb.q_mb[i], tb.arb[i, lc.P_MB], s)
    else:
        q = tb.q_mf[i, s].copy()
    if prm.pavlovian:
        q += prm.pav_weight * tb.q_pav[i, s]
    return q


@njit(cache=True)
def _mission_done(cells, env, prm):
    if prm.peb_mode:
        jxx = 0.0
        jxy = 0.0
        jyy = 0.0
        for i in range(cells.shape[0]):
            jxx += env.fim[cells[i], 0]
            jxy += env.fim[cells[i], 1]
            jyy += env.fim[cells[i], 2]
        return peb_from_fim(jxx, jxy, jyy) <= prm.peb_threshold
    count = 0
    for i in range(cells.shape[0]):
        c = cells[i]
        if env.cheb[c] <= prm.range_cells and env.los[c]:
            count += 1
    return count >= prm.min_agents


@njit(cache=True)
def run_episode_kernel(env, tb, prm, u_act, u_plan, instr_sum, pav_sum, path):
    """One training episode.  Returns ``(steps, cause, collisions, p_mb_sum)``.

    ``u_act[i, t]`` drives agent ``i``'s softmax draw at step ``t`` and
    ``u_plan[i, t]`` its Dyna replays.  Per-agent reward sums are written
    into ``instr_sum`` / ``pav_sum``.  If ``path`` has ``max_steps + 1``
    rows the visited cells are recorded into it.
    """
    n = env.starts.shape[0]
    cells = env.starts.copy()
    actions = np.empty(n, dtype=np.int64)
    next_actions = np.empty(n, dtype=np.int64)
    collisions = 0
    p_mb_sum = 0.0
    record = path.shape[0] == prm.max_steps + 1
    if record:
        path[0] = cells
    if prm.max_steps == 0:
        return 0, 2, 0, 0.0
    for i in range(n):
        actions[i] = inverse_cdf(softmax_kernel(_scores(tb, i, cells[i], prm), prm.temperature), u_act[i, 0])

    t = 0
    while True:
        new_cells, collided = resolve_moves(cells, actions, env.next_state)
        t += 1
        done = _mission_done(new_cells, env, prm)
        last = done or t >= prm.max_steps
        for i in range(n):
            s = cells[i]
            a = actions[i]
            s2 = new_cells[i]
            if collided[i]:
                collisions += 1
            r_inst = instrumental_kernel(env.rss[s2], collided[i], done, prm.rss_scale, prm.rss_reference,
                                         prm.collision_penalty, prm.terminal_bonus)
            instr_sum[i] += r_inst
            # next action from the pre-update tables (needed by SARSA)
            if done:
                a2 = 0
            else:
                a2 = inverse_cdf(softmax_kernel(_scores(tb, i, s2, prm), prm.temperature), u_act[i, t])
            next_actions[i] = a2

            entered = s2 != s
            kind2 = env.kinds[s2]
            cue = entered and (kind2 == 2 or kind2 == 3)
            r = r_inst
            post = prm.pavlovian and tb.phase[i] == 1
            if prm.pavlovian:
                r_pav = pavlovian_kernel(kind2, entered, env.los[s2], prm.gate_reward, prm.gps_penalty,
                                         prm.nlos_penalty, not tb.gate_paid[i])
                if entered and kind2 == 2:
                    tb.gate_paid[i] = True
                pav_sum[i] += r_pav
                if post and prm.shaping:
                    r += shaping_kernel(tb.v_pav[i, s], tb.v_pav[i, s2], prm.gamma, done)
                # a gate entry delivers the cue's outcome, so the critic does not
                # bootstrap past it (else in-out loops look like repeated +5)
                lc.pavlovian_update(tb.q_pav[i], tb.v_pav[i], s, a, r_pav, s2, prm.alpha, prm.gamma,
                                    done or (entered and kind2 == 2))

            if post and prm.phase_switch:
                rpe = lc.sarsa_update(tb.q_mf[i], tb.traces[i], tb.trace_keys[i], tb.n_trace_keys[i],
                                      s, a, r, s2, a2, prm.alpha, prm.gamma, prm.trace_lambda, True, done)
            else:
                rpe = lc.q_learning_update(tb.q_mf[i], s, a, r, s2, prm.alpha, prm.gamma, done)

            if prm.model_based:
                spe = lc.state_prediction_error(tb.m_count_sa[i], tb.m_count_sas[i], s, a, s2)
                lc.dyna_observe(tb.m_next[i], tb.m_reward[i], tb.m_terminal[i], tb.m_count_sa[i],
                                tb.m_count_sas[i], tb.m_seen[i], tb.m_n_seen[i], s, a, r_inst, s2, done)
                # the model-based system learns environment reward only: shaping
                # under a moving potential would be replayed stale
                lc.q_learning_update(tb.q_mb[i], s, a, r_inst, s2, prm.alpha, prm.gamma, done)
                lc.dyna_plan(tb.m_next[i], tb.m_reward[i], tb.m_terminal[i], tb.m_seen[i], tb.m_n_seen[i],
                             tb.q_mb[i], u_plan[i, t - 1], prm.alpha, prm.gamma)
                p_mb_sum += lc.arbitration_update(tb.arb[i], rpe, spe, prm.ema_decay, prm.sharpness)

            if prm.pavlovian and tb.phase[i] == 0 and cue:
                tb.phase[i] = 1
                lc.reset_traces(tb.traces[i], tb.trace_keys[i], tb.n_trace_keys[i])

        cells = new_cells
        if record:
            path[t] = cells
        actions, next_actions = next_actions, actions
        if last:
            return t, 1 if done else 2, collisions, p_mb_sum


# ---------------------------------------------------------------------------
# python drivers


class Streams(NamedTuple):
    action: list
    planning: list
    gps: list


def agent_streams(seed: int, n_agents: int) -> Streams:
    """Per-agent action / planning / GPS generators split from one run seed."""
    children = np.random.SeedSequence(seed).spawn(n_agents)
    per_agent = [c.spawn(3) for c in children]
    return Streams(
        [np.random.Generator(np.random.PCG64(p[0])) for p in per_agent],
        [np.random.Generator(np.random.PCG64(p[1])) for p in per_agent],
        [np.random.Generator(np.random.PCG64(p[2])) for p in per_agent],
    )


@dataclass
class Scenario:
    grid: GridMap
    env: EnvArrays

    @classmethod
    def from_config(cls, config: RunConfig, grid: GridMap | None = None) -> "Scenario":
        grid = config.load_grid() if grid is None else grid
        return cls(grid, env_arrays(grid, config.link, config.termination))


def run_episode(config: RunConfig, scenario: Scenario, tables: Tables, episode_index: int,
                streams: Streams, path: np.ndarray | None = None) -> EpisodeMetrics:
    """Run episode ``episode_index`` (0-based) in place on ``tables``.

    Pass ``path`` of shape ``(max_steps + 1, n_agents)`` to record visited
    state indices (rows past the final step are left untouched).
    """
    n = scenario.grid.n_agents
    prm = make_params(config, episode_index)
    if not config.persist_cue_phase:
        tables.phase[:] = 0
    tables.gate_paid[:] = False
    for i in range(n):
        lc.reset_traces(tables.traces[i], tables.trace_keys[i], tables.n_trace_keys[i])
    steps = config.max_steps
    u_act = np.stack([g.random(steps + 1) for g in streams.action])
    k = prm.planning_steps
    u_plan = np.stack([g.random((steps, k)) for g in streams.planning]) if k else np.zeros((n, steps, 0))
    instr = np.zeros(n)
    pav = np.zeros(n)
    if path is None:
        path = np.zeros((0, n), dtype=np.int64)
    t, cause, collisions, p_sum = run_episode_kernel(scenario.env, tables, prm, u_act, u_plan, instr, pav, path)
    p_mean = p_sum / (t * n) if prm.model_based and t > 0 else None
    return EpisodeMetrics(
        episode=episode_index + 1,
        steps=int(t),
        cause=TerminationCause(int(cause)),
        instrumental=tuple(float(x) for x in instr),
        pavlovian=tuple(float(x) for x in pav) if prm.pavlovian else tuple(0.0 for _ in range(n)),
        collisions=int(collisions),
        p_mb_mean=p_mean,
    )


@dataclass
class TrainingResult:
    seed: int
    condition: Condition
    metrics: list[EpisodeMetrics]
    snapshots: dict[int, np.ndarray]  # episode -> (n_agents, height, width)
    tables: Tables | None
    trajectories: list[list[tuple[int, int]]]
    gps_estimates: list[np.ndarray]

    @property
    def steps(self) -> np.ndarray:
        return np.array([m.steps for m in self.metrics], dtype=np.int64)


def run_training(config: RunConfig, seed: int | None = None, scenario: Scenario | None = None) -> TrainingResult:
    seed = config.base_seed if seed is None else seed
    scenario = Scenario.from_config(config) if scenario is None else scenario
    grid = scenario.grid
    tables = new_tables(grid.n_agents, grid.n_states, config.condition.model_based)
    streams = agent_streams(seed, grid.n_agents)
    wanted = {e for e in config.snapshot_episodes if e <= config.episodes}
    dropped = set(config.snapshot_episodes) - wanted
    if dropped:
        log.warning("snapshot episodes %s exceed episodes=%d; skipped", sorted(dropped), config.episodes)

    metrics, snapshots = [], {}
    for e in range(config.episodes):
        metrics.append(run_episode(config, scenario, tables, e, streams))
        if e + 1 in wanted:
            snapshots[e + 1] = np.stack([pavlovian_field_snapshot(grid, tables.v_pav[i])
                                         for i in range(grid.n_agents)])
    paths = greedy_trajectory(scenario, tables, config.condition, config.max_steps, config.termination,
                              config.policy.pav_weight)
    gps = [trajectory_gps_estimates(grid, p, config.gps, streams.gps[i]) for i, p in enumerate(paths)]
    return TrainingResult(seed, config.condition, metrics, snapshots, tables, paths, gps)


@njit(cache=True)
def greedy_kernel(env, tb, prm, max_steps):
    n = env.starts.shape[0]
    path = np.empty((max_steps + 1, n), dtype=np.int64)
    cells = env.starts.copy()
    path[0] = cells
    actions = np.empty(n, dtype=np.int64)
    t = 0
    while t < max_steps:
        for i in range(n):
            actions[i] = lc.argmax_first(_scores(tb, i, cells[i], prm))
        cells, _ = resolve_moves(cells, actions, env.next_state)
        t += 1
        path[t] = cells
        if _mission_done(cells, env, prm):
            break
    return path[: t + 1]


def greedy_trajectory(scenario: Scenario, tables: Tables, condition: Condition, max_steps: int,
                      termination: TerminationConfig | None = None,
                      pav_weight: float = 1.0) -> list[list[tuple[int, int]]]:
    """Joint zero-temperature rollout from the agent starts.

    Each agent takes the argmax of its condition's final action scores (ties
    to the lowest action index) until the mission ends or ``max_steps``.
    Returns one cell path per agent, starting cell included.
    """
    termination = TerminationConfig() if termination is None else termination
    cfg = RunConfig(condition=condition, max_steps=max_steps, termination=termination,
                    policy=PolicyConfig(pav_weight=pav_weight))
    prm = make_params(cfg, 0)
    raw = greedy_kernel(scenario.env, tables, prm, max_steps)
    grid = scenario.grid
    return [[grid.cell_of(s) for s in raw[:, i]] for i in range(raw.shape[1])]


def trajectory_gps_estimates(grid: GridMap, path, model: GpsNoiseModel, rng) -> np.ndarray:
    """Logged position estimates along ``path``; noisy only inside GPS-denied cells."""
    return np.array([gps_estimate(c, grid.kind(c) == CellKind.GPS_DENIED, model, rng) for c in path])


def pavlovian_field_snapshot(grid: GridMap, v_pav: np.ndarray) -> np.ndarray:
    """``(height, width)`` matrix of ``v_pav`` indexed ``[y, x]``; obstacles are NaN."""
    field_ = np.asarray(v_pav, dtype=float).reshape(grid.height, grid.width).copy()
    field_[grid.cells == CellKind.OBSTACLE] = np.nan
    return field_


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class AggregateMetrics:
    condition: Condition
    seeds: tuple[int, ...]
    steps: np.ndarray  # (runs, episodes)
    runs: list[TrainingResult] = field(default_factory=list, repr=False)

    @property
    def mean_steps(self) -> np.ndarray:
        return self.steps.mean(axis=0)

    @property
    def std_steps(self) -> np.ndarray:
        return self.steps.std(axis=0)

    def smoothed_mean(self, window: int) -> np.ndarray:
        return moving_average(self.mean_steps, window)


def moving_average(x, window: int) -> np.ndarray:
    """Trailing mean; the first ``window - 1`` entries average what is available."""
    x = np.asarray(x, dtype=float)
    if window <= 1:
        return x.copy()
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def _train_one(args):
    config, seed, keep_tables = args
    result = run_training(config, seed)
    if not keep_tables and seed != config.base_seed:
        result.tables = None
    return result


def aggregate(condition: Condition, results: list[TrainingResult]) -> AggregateMetrics:
    """Order-independent reduction: runs are sorted by seed before stacking."""
    results = sorted(results, key=lambda r: r.seed)
    return AggregateMetrics(condition, tuple(r.seed for r in results),
                            np.stack([r.steps for r in results]), results)


def run_monte_carlo(config: RunConfig, workers: int = 1, keep_tables: bool = False) -> AggregateMetrics:
    """Seeds ``base_seed + r`` for ``r < monte_carlo_runs``, optionally in worker processes.

    Learned tables are kept for the ``base_seed`` run only, unless
    ``keep_tables`` (a full-hybrid run holds about 60 MB of model counts).
    """
    seeds = [config.base_seed + r for r in range(config.monte_carlo_runs)]
    jobs = [(config, s, keep_tables) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    return aggregate(config.condition, results)


def compare(config: RunConfig, conditions=ALL_CONDITIONS, workers: int = 1,
            keep_tables: bool = False) -> dict[Condition, AggregateMetrics]:
    """Monte Carlo over several conditions with shared seeds."""
    return {Condition(c): run_monte_carlo(replace(config, condition=Condition(c)), workers, keep_tables)
            for c in conditions}


def episodes_to_criterion(steps, window: int = 20, fraction: float = 0.5) -> np.ndarray:
    """Per run, the first episode (1-based) whose trailing ``window``-episode
    mean of steps drops below ``fraction`` of the across-run episode-1 mean.

    Runs that never get there are reported as ``episodes + 1``.
    """
    steps = np.atleast_2d(np.asarray(steps, dtype=float))
    n_ep = steps.shape[1]
    threshold = fraction * steps[:, 0].mean()
    out = np.full(steps.shape[0], n_ep + 1, dtype=np.int64)
    if n_ep < window:
        return out
    kernel = np.ones(window) / window
    for r, row in enumerate(steps):
        hits = np.flatnonzero(np.convolve(row, kernel, mode="valid") < threshold)
        if hits.size:
            out[r] = hits[0] + window
    return out
