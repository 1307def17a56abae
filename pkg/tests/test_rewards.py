import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import greedy_sets, mdp_suite, value_iteration
from pavlovian_rl.env_grid import CellKind
from pavlovian_rl.rewards import (
    CuePhase,
    Phase,
    RewardBreakdown,
    RewardConfig,
    cue_phase_step,
    instrumental_reward,
    is_cue,
    pavlovian_reward,
    shaping_reward,
)

CFG = RewardConfig()


class TestInstrumental:
    def test_reference_zero(self):
        assert instrumental_reward(CFG, CFG.rss_reference, False, False) == 0.0

    def test_collision(self):
        assert instrumental_reward(CFG, CFG.rss_reference, True, False) == -2.0

    def test_noise_floor_reference(self):
        cfg = RewardConfig(rss_reference=-104.0)
        assert instrumental_reward(cfg, -66.05, False, False) == pytest.approx(0.3795, abs=1e-9)

    def test_terminal_bonus(self):
        assert instrumental_reward(CFG, CFG.rss_reference, False, True) == 20.0

    def test_defaults(self):
        assert (CFG.collision_penalty, CFG.gate_reward, CFG.gps_denied_penalty, CFG.nlos_penalty) == (2, 5, -5, -2)
        with pytest.raises(ValueError):
            RewardConfig(rss_scale=-0.1)


class TestPavlovian:
    def test_gate(self):
        assert pavlovian_reward(CFG, CellKind.GATE, True) == 5.0

    def test_nlos(self):
        assert pavlovian_reward(CFG, CellKind.FREE, False) == -2.0

    def test_denied_nlos(self):
        assert pavlovian_reward(CFG, CellKind.GPS_DENIED, False) == -7.0

    def test_entry_only(self):
        assert pavlovian_reward(CFG, CellKind.GATE, True, entered=False) == 0.0
        assert pavlovian_reward(CFG, CellKind.GPS_DENIED, False, entered=False) == -2.0

    def test_gate_once(self):
        assert pavlovian_reward(CFG, CellKind.GATE, True, gate_available=False) == 0.0

    @given(st.sampled_from(list(CellKind)), st.booleans(), st.booleans())
    def test_pure(self, kind, los, entered):
        assert pavlovian_reward(CFG, kind, los, entered) == pavlovian_reward(CFG, kind, los, entered)

    def test_is_cue(self):
        assert is_cue(CellKind.GATE, True) and is_cue(CellKind.GPS_DENIED, True)
        assert not is_cue(CellKind.GATE, False) and not is_cue(CellKind.FREE, True)


class TestShaping:
    def test_constant_potential(self):
        phi = np.full(4, 3.0)
        assert shaping_reward(phi, 0, 1, 0.9) == pytest.approx(0.9 * 3 - 3)

    def test_terminal_potential_zero(self):
        phi = np.array([2.0, 7.0])
        assert shaping_reward(phi, 0, 1, 0.9, terminal=True) == -2.0

    @given(st.lists(st.integers(0, 9), min_size=2, max_size=30), st.integers(0, 2**32 - 1))
    def test_telescopes(self, path, seed):
        phi = np.random.default_rng(seed).normal(size=10) * 4
        total = sum(shaping_reward(phi, a, b, 1.0) for a, b in zip(path, path[1:]))
        assert total == pytest.approx(phi[path[-1]] - phi[path[0]], abs=1e-9)

    @given(st.lists(st.integers(0, 9), min_size=1, max_size=30), st.integers(0, 2**32 - 1))
    def test_closed_loop_zero(self, path, seed):
        phi = np.random.default_rng(seed).normal(size=10)
        loop = path + [path[0]]
        assert abs(sum(shaping_reward(phi, a, b, 1.0) for a, b in zip(loop, loop[1:]))) < 1e-9

    @pytest.mark.parametrize("idx", range(10))
    def test_policy_invariance_random_potential(self, idx):
        mdp = mdp_suite(10, seed=5)[idx]
        nxt, r, term = mdp.reward_terminal()
        phi = np.random.default_rng(idx).normal(size=mdp.n_states) * 5
        phi_next = np.where(term, 0.0, phi[nxt])
        shaped = r + mdp.gamma * phi_next - phi[:, None]
        q = value_iteration(nxt, r, term, mdp.gamma)
        qs = value_iteration(nxt, shaped, term, mdp.gamma)
        states = mdp.learnable_states()
        assert greedy_sets(q, states) == greedy_sets(qs, states)
        assert np.allclose(qs[states] + phi[states, None], q[states], atol=1e-9)


class TestCuePhase:
    def test_no_cue(self):
        p = CuePhase()
        for t in range(50):
            p = cue_phase_step(p, False, t)
        assert p == CuePhase(Phase.PRE_CUE, None)

    def test_switch_latches(self):
        p = CuePhase()
        for t in range(17):
            p = cue_phase_step(p, False, t)
        p = cue_phase_step(p, True, 17)
        assert p == CuePhase(Phase.POST_CUE, 17)
        p = cue_phase_step(p, True, 30)
        p = cue_phase_step(p, False, 31)
        assert p == CuePhase(Phase.POST_CUE, 17)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_breakdown_sums(i, p, s):
    b = RewardBreakdown.compose(i, p, s)
    assert b.total == i + s
    b = RewardBreakdown.compose(i, p, s, 1.0)
    assert b.total == i + s + p
