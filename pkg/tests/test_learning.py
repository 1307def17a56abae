import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harness import train_dyna, train_q_learning, train_sarsa_greedy
from oracles import GridMDP, greedy_sets, mdp_suite, random_grid_mdp, value_iteration
from pavlovian_rl import learning as lc
from pavlovian_rl.learning import Hyper
from pavlovian_rl.policy import DecaySchedule, softmax_probs

finite = st.floats(-50, 50, allow_nan=False)


class TestTdV:
    def test_zero_fixed_point(self):
        v = np.zeros(3)
        assert lc.td_v_update(v, 0, 0.0, 1, 0.5, 0.9) == 0.0
        assert not v.any()

    def test_direct(self):
        v = np.zeros(3)
        delta = lc.td_v_update(v, 0, 1.0, 1, 0.5, 0.9)
        assert delta == 1.0 and v[0] == 0.5

    def test_chain_converges_to_discounted_return(self):
        # 0 -> 1 -> 2 -> end, reward 1 on each step
        gamma = 0.9
        v = np.zeros(3)
        for _ in range(2000):
            lc.td_v_update(v, 0, 1.0, 1, 0.3, gamma)
            lc.td_v_update(v, 1, 1.0, 2, 0.3, gamma)
            lc.td_v_update(v, 2, 1.0, 0, 0.3, gamma, True)
        want = [1 + gamma + gamma**2, 1 + gamma, 1.0]
        assert np.allclose(v, want, atol=1e-6)


class TestQLearning:
    def test_first_update(self):
        q = lc.new_q_table(4)
        lc.q_learning_update(q, 0, 2, 1.0, 1, 0.55, 0.99)
        assert q[0, 2] == 0.55

    def test_fixed_point(self):
        q = lc.new_q_table(2)
        q[1] = [0.0, 2.0, 0.0, 0.0, 0.0]
        q[0, 0] = 0.99 * 2.0
        assert lc.q_learning_update(q, 0, 0, 0.0, 1, 0.5, 0.99) == 0.0
        assert q[0, 0] == 0.99 * 2.0

    def test_terminal_ignores_next(self):
        q = lc.new_q_table(2)
        q[1] = 100.0
        lc.q_learning_update(q, 0, 0, 1.0, 1, 1.0, 0.9, True)
        assert q[0, 0] == 1.0

    def test_4x4_matches_value_iteration(self):
        mdp = GridMDP(4, 4, np.zeros((4, 4), dtype=bool), goal=15)
        q = train_q_learning(mdp)
        qs = value_iteration(*mdp.reward_terminal(), mdp.gamma)
        states = mdp.learnable_states()
        assert np.max(np.abs(q[states] - qs[states])) < 1e-3
        assert greedy_sets(q, states) == greedy_sets(qs, states)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), finite, st.floats(0.01, 1.0), st.floats(0.0, 0.999))
    def test_locality(self, seed, r, alpha, gamma):
        rng = np.random.default_rng(seed)
        q = rng.normal(size=(6, 5))
        before = q.copy()
        s, a, s2 = rng.integers(6), rng.integers(5), rng.integers(6)
        lc.q_learning_update(q, s, a, r, s2, alpha, gamma)
        mask = np.ones_like(q, dtype=bool)
        mask[s, a] = False
        assert np.array_equal(q[mask], before[mask])


class TestSarsa:
    def test_lambda_zero_is_one_step(self):
        rng = np.random.default_rng(0)
        q1 = rng.normal(size=(5, 5))
        q2 = q1.copy()
        tr = lc.EligibilityTraces.zeros(5)
        for _ in range(50):
            s, a, s2, a2 = rng.integers(5, size=4)
            r = rng.normal()
            d1 = lc.sarsa(q1, tr, s, a, r, s2, a2, 0.4, 0.9, lam=0.0)
            d2 = lc.sarsa(q2, None, s, a, r, s2, a2, 0.4, 0.9)
            assert d1 == d2
        assert np.array_equal(q1, q2)

    @settings(max_examples=80, deadline=None)
    @given(st.integers(0, 2**32 - 1), finite, st.booleans())
    def test_greedy_next_equals_q_learning(self, seed, r, terminal):
        rng = np.random.default_rng(seed)
        q1 = np.round(rng.normal(size=(4, 5)), 1)  # rounding creates ties
        q2 = q1.copy()
        s, a, s2 = rng.integers(4, size=3)
        a2 = lc.argmax_first(q1[s2])
        d1 = lc.sarsa(q1, None, s, a, r, s2, a2, 0.55, 0.99, terminal=terminal)
        d2 = lc.q_learning_update(q2, s, a, r, s2, 0.55, 0.99, terminal)
        assert d1 == d2 and np.array_equal(q1, q2)

    def test_two_step_corridor_trace_unrolling(self):
        alpha, gamma, lam, r = 0.5, 0.9, 0.8, 10.0
        q = lc.new_q_table(3)
        tr = lc.EligibilityTraces.zeros(3)
        lc.sarsa(q, tr, 0, 3, 0.0, 1, 3, alpha, gamma, lam)
        lc.sarsa(q, tr, 1, 3, r, 2, 0, alpha, gamma, lam, terminal=True)
        assert q[0, 3] == pytest.approx(alpha * gamma * lam * r, rel=1e-15)
        assert q[1, 3] == pytest.approx(alpha * r)

    def test_replacing_not_accumulating(self):
        q = lc.new_q_table(2)
        tr = lc.EligibilityTraces.zeros(2)
        lc.sarsa(q, tr, 0, 0, 0.0, 0, 0, 0.5, 0.9, 1.0)
        lc.sarsa(q, tr, 0, 0, 0.0, 0, 0, 0.5, 0.9, 1.0)
        assert tr.e[0, 0] == pytest.approx(0.9)  # set to 1 then decayed, never 1.9

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
    def test_traces_bounded_and_reset(self, seed, lam):
        rng = np.random.default_rng(seed)
        q = lc.new_q_table(6)
        tr = lc.EligibilityTraces.zeros(6)
        for _ in range(40):
            s, a, s2, a2 = rng.integers(0, 5, size=4)
            lc.sarsa(q, tr, s, a, rng.normal(), s2, a2, 0.3, 0.95, lam)
            assert tr.e.min() >= 0.0 and tr.e.max() <= 1.0
            active = {divmod(int(k), 5) for k in tr.keys[: tr.n_keys[0]]}
            assert active == set(zip(*np.nonzero(tr.e)))
        tr.reset()
        assert not tr.e.any() and not tr.active


class TestAdvantageAndPavlovian:
    def test_advantage(self):
        q = np.array([[1.0, 3.0, 0, 0, 0]])
        v = np.array([2.0])
        assert lc.advantage(q, v, 0, 0) == -1.0
        assert lc.advantage(q, v, 0, 1) == 1.0

    def test_advantage_greedy_zero(self):
        q = np.array([[1.0, 3.0, 2.0, 0, 0]])
        v = np.array([3.0])
        assert lc.advantage(q, v, 0, 1) == 0.0
        assert all(lc.advantage(q, v, 0, a) <= 0 for a in range(5))

    @given(st.lists(finite, min_size=5, max_size=5), st.floats(0.1, 5.0))
    def test_softmax_weighted_advantage_zero(self, row, tau):
        q = np.array([row])
        p = softmax_probs(q[0], tau)
        v = np.array([p @ q[0]])
        assert abs(sum(p[a] * lc.advantage(q, v, 0, a) for a in range(5))) < 1e-9

    def test_no_cue_stays_zero(self):
        pav = lc.PavlovianTable.zeros(5)
        rng = np.random.default_rng(0)
        for _ in range(100):
            lc.pavlovian_update(pav.q, pav.v, rng.integers(5), rng.integers(5), 0.0, rng.integers(5), 0.55, 0.99)
        assert not pav.q.any() and not pav.v.any()

    def test_gps_entry(self):
        pav = lc.PavlovianTable.zeros(5)
        lc.pavlovian_update(pav.q, pav.v, 1, 3, -5.0, 2, 0.55, 0.99)
        assert pav.q[1, 3] == -2.75
        assert pav.v[1] == 0.0  # other actions untried

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_v_tracks_row_max(self, seed):
        rng = np.random.default_rng(seed)
        pav = lc.PavlovianTable.zeros(6)
        for _ in range(60):
            s = rng.integers(6)
            lc.pavlovian_update(pav.q, pav.v, s, rng.integers(5), rng.normal() * 3, rng.integers(6), 0.55, 0.9)
        touched = np.any(pav.q != 0, axis=1)
        assert np.array_equal(pav.v[touched], pav.q[touched].max(axis=1))

    def test_gate_field_peaks_and_decays(self):
        # corridor 0..5, gate at 5: the critic value falls off with distance
        n, gamma = 6, 0.9
        pav = lc.PavlovianTable.zeros(n)
        for _ in range(400):
            for s in range(n - 1):
                r = 5.0 if s + 1 == n - 1 else 0.0
                lc.pavlovian_update(pav.q, pav.v, s, 3, r, s + 1, 0.55, gamma, s + 1 == n - 1)
        v = pav.v[: n - 1]
        assert np.all(np.diff(v) > 0)
        assert v[-1] == pytest.approx(5.0)
        assert v[0] == pytest.approx(5.0 * gamma ** (n - 2), rel=1e-6)


class TestDyna:
    def test_observe(self):
        m = lc.DynaModel.empty(4)
        lc.observe(m, 1, 2, 0.5, 3)
        assert m.seen_pairs() == [(1, 2)]
        lc.observe(m, 1, 2, -1.0, 0)
        assert m.seen_pairs() == [(1, 2)]
        assert m.reward[1, 2] == -1.0 and m.next_state[1, 2] == 0
        assert m.count_sa[1, 2] == 2 and m.count_sas[1, 2, 3] == 1 and m.count_sas[1, 2, 0] == 1

    def test_empirical_frequency(self):
        rng = np.random.default_rng(3)
        m = lc.DynaModel.empty(3)
        for _ in range(1000):
            lc.observe(m, 0, 0, 0.0, 1 if rng.random() < 0.3 else 2)
        assert abs(m.count_sas[0, 0, 1] / m.count_sa[0, 0] - 0.3) < 0.05

    def test_plan_noops(self):
        rng = np.random.default_rng(0)
        q = rng.normal(size=(4, 5))
        before = q.copy()
        lc.plan(lc.DynaModel.empty(4), q, 10, 0.5, 0.9, rng)
        m = lc.DynaModel.empty(4)
        lc.observe(m, 0, 0, 1.0, 1)
        lc.plan(m, q, 0, 0.5, 0.9, rng)
        assert np.array_equal(q, before)

    def test_plan_replays_seen_only(self):
        m = lc.DynaModel.empty(4)
        lc.observe(m, 2, 1, 1.0, 3)
        q = lc.new_q_table(4)
        lc.plan(m, q, 5, 0.5, 0.9, np.random.default_rng(0))
        assert q[2, 1] == pytest.approx(1 - 0.5**5)
        q[2, 1] = 0
        assert not q.any()

    def test_spe(self):
        m = lc.DynaModel.empty(3)
        assert lc.spe(m, 0, 0, 1) == 1.0
        lc.observe(m, 0, 0, 0.0, 1)
        assert lc.spe(m, 0, 0, 1) == 0.0
        for k in range(1000):
            lc.observe(m, 0, 0, 0.0, 1 + k % 2)
        assert lc.spe(m, 0, 0, 2) == pytest.approx(0.5, abs=0.01)
        assert lc.spe(m, 0, 0, 1) == pytest.approx(0.5, abs=0.01)

    def test_k0_equals_q_learning(self):
        mdp = random_grid_mdp(np.random.default_rng(11))
        nxt, r, term = mdp.reward_terminal()
        rng = np.random.default_rng(5)
        q1 = lc.new_q_table(mdp.n_states)
        q2 = q1.copy()
        m = lc.DynaModel.empty(mdp.n_states)
        plan_rng = np.random.default_rng(9)
        states = mdp.learnable_states()
        for _ in range(500):
            s, a = states[rng.integers(len(states))], rng.integers(5)
            lc.q_learning_update(q1, s, a, r[s, a], nxt[s, a], 0.55, 0.9, term[s, a])
            lc.q_learning_update(q2, s, a, r[s, a], nxt[s, a], 0.55, 0.9, term[s, a])
            lc.observe(m, s, a, r[s, a], nxt[s, a], term[s, a])
            lc.plan(m, q2, 0, 0.55, 0.9, plan_rng)
        assert q1.tobytes() == q2.tobytes()

    def test_planning_speeds_up_chain(self):
        """10-state chain, reward at the end: K=4 reaches 99% of Q* in fewer real steps."""
        n, gamma = 10, 0.9
        mdp = GridMDP(n, 1, np.zeros((1, n), dtype=bool), goal=n - 1, step_reward=0.0, gamma=gamma)
        nxt, r, term = mdp.reward_terminal()
        qs = value_iteration(nxt, r, term, gamma)
        states = mdp.learnable_states()

        def steps_to_99(k, seed):
            rng = np.random.default_rng(seed)
            plan_rng = np.random.default_rng(seed + 1000)
            q = lc.new_q_table(n)
            m = lc.DynaModel.empty(n)
            s = 0
            for t in range(1, 200_000):
                a = int(rng.integers(5))
                s2 = nxt[s, a]
                lc.q_learning_update(q, s, a, r[s, a], s2, 0.5, gamma, term[s, a])
                lc.observe(m, s, a, r[s, a], s2, term[s, a])
                lc.plan(m, q, k, 0.5, gamma, plan_rng)
                if np.all(q[states].max(axis=1) >= 0.99 * qs[states].max(axis=1)):
                    return t
                s = 0 if term[s, a] else s2
            return 200_000

        base = np.mean([steps_to_99(0, sd) for sd in range(50)])
        planned = np.mean([steps_to_99(4, sd) for sd in range(50)])
        assert planned < base


class TestArbitration:
    def test_symmetric_half(self):
        arb = lc.new_arbitration()
        assert lc.arbitration_update(arb, 1.0, 1.0, 0.1, 5.0) == 0.5

    def test_ema(self):
        arb = lc.new_arbitration()
        lc.arbitration_update(arb, 1.0, 0.0, 0.5, 5.0)
        lc.arbitration_update(arb, -1.0, 0.0, 0.5, 5.0)
        assert arb[lc.REL_MF] == 0.75

    def test_perfect_model_wins(self):
        arb = lc.new_arbitration()
        lc.arbitration_update(arb, 0.0, 1.0, 0.1, 5.0)  # start with an informative model error
        prev = arb[lc.P_MB]
        for _ in range(200):
            p = lc.arbitration_update(arb, 0.3, 0.0, 0.1, 5.0)
            assert p >= prev
            prev = p
        assert prev >= 0.99

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(0, 1)), min_size=1, max_size=50),
           st.floats(0.01, 0.99), st.floats(0.1, 50))
    def test_p_in_unit_interval(self, stream, d, k):
        arb = lc.new_arbitration()
        for rpe, spe in stream:
            p = lc.arbitration_update(arb, rpe, spe, d, k)
            assert 0.0 <= p <= 1.0

    def test_hybrid_endpoints(self):
        rng = np.random.default_rng(0)
        qmf, qmb = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
        assert np.array_equal(lc.hybrid_q(qmf, qmb, 0.0, 1), qmf[1])
        assert np.array_equal(lc.hybrid_q(qmf, qmb, 1.0, 1), qmb[1])

    def test_hybrid_midpoint(self):
        qmf = np.array([[2.0, 0.0]])
        qmb = np.array([[0.0, 2.0]])
        assert np.array_equal(lc.hybrid_q(qmf, qmb, 0.5, 0), [1.0, 1.0])


class TestHyper:
    def test_defaults(self):
        h = Hyper()
        assert h.alpha == DecaySchedule(0.55, 0.999, 0.08)
        assert (h.gamma, h.planning_steps, h.trace_lambda) == (0.99, 4, 0.9)

    @pytest.mark.parametrize("kw", [{"gamma": 1.0}, {"gamma": 0.0}, {"trace_lambda": 1.5}, {"planning_steps": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            Hyper(**kw)


@pytest.mark.parametrize("idx", range(8))
def test_learners_match_value_iteration(idx):
    mdp = mdp_suite(8, seed=99)[idx]
    qs = value_iteration(*mdp.reward_terminal(), mdp.gamma)
    states = mdp.learnable_states()
    for q in (train_q_learning(mdp, idx), train_sarsa_greedy(mdp, idx), train_dyna(mdp, 0, idx),
              train_dyna(mdp, 4, idx)):
        assert np.max(np.abs(q[states] - qs[states])) < 1e-3
        assert greedy_sets(q, states) == greedy_sets(qs, states)


def test_value_iteration_oracle_closed_form():
    # corridor of 5 with goal at the end and no step cost: Q*(s, right) = gamma^(steps-1)
    mdp = GridMDP(5, 1, np.zeros((1, 5), dtype=bool), goal=4, step_reward=0.0, gamma=0.9)
    qs = value_iteration(*mdp.reward_terminal(), 0.9)
    for s in range(4):
        assert qs[s, 3] == pytest.approx(0.9 ** (3 - s))
