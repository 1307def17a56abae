"""
Tabular learners against an exact answer
=========================================

Before trusting the multi-agent runs it helps to see the update rules on a
problem small enough to solve exactly.  A 5x4 grid with a wall and a single
goal is solved by value iteration; Q-learning, SARSA(lambda) and Dyna-Q are
then run for a fixed number of episodes and compared with the exact Q*.
The last part shows that shaping with a potential moves values but not the
greedy policy.

    python demos/learners_on_a_small_grid.py
"""
import numpy as np

from pavlovian_rl import learning as lc
from pavlovian_rl.policy import softmax_probs

W, H = 5, 4
walls = {(2, 1), (2, 2)}
goal = (4, 3)
moves = [(0, 1), (0, -1), (-1, 0), (1, 0), (0, 0)]  # up, down, left, right, hover
gamma = 0.9


def idx(c):
    return c[1] * W + c[0]


n = W * H
nxt = np.zeros((n, 5), dtype=int)
for s in range(n):
    x, y = s % W, s // W
    for a, (dx, dy) in enumerate(moves):
        c = (x + dx, y + dy)
        ok = 0 <= c[0] < W and 0 <= c[1] < H and c not in walls
        nxt[s, a] = idx(c) if ok else s
term = nxt == idx(goal)
r = np.where(term, 1.0, -0.05)

# exact solution
q_star = np.zeros((n, 5))
for _ in range(500):
    v = q_star.max(axis=1)
    q_star = r + gamma * np.where(term, 0.0, v[nxt])
starts = [s for s in range(n) if (s % W, s // W) not in walls and s != idx(goal)]


def run(learner, episodes=300, seed=0):
    """Episodes from random starts with a softmax behaviour policy at tau 0.3."""
    rng = np.random.default_rng(seed)
    q = lc.new_q_table(n)
    traces = lc.EligibilityTraces.zeros(n)
    model = lc.DynaModel.empty(n)
    for _ in range(episodes):
        s = int(rng.choice(starts))
        traces.reset()
        a = int(rng.choice(5, p=softmax_probs(q[s], 0.3)))
        for _ in range(50):
            s2, done = nxt[s, a], term[s, a]
            a2 = int(rng.choice(5, p=softmax_probs(q[s2], 0.3)))
            if learner == "sarsa":
                lc.sarsa(q, traces, s, a, r[s, a], s2, a2, 0.5, gamma, lam=0.8, terminal=done)
            else:
                lc.q_learning_update(q, s, a, r[s, a], s2, 0.5, gamma, done)
            if learner == "dyna":
                lc.observe(model, s, a, r[s, a], s2, done)
                lc.plan(model, q, 10, 0.5, gamma, rng)
            if done:
                break
            s, a = s2, a2
    return q


v_star = q_star.max(axis=1)
print("state values against V* and greedy agreement with Q*")
for name in ("q", "sarsa", "dyna"):
    q = run(name)
    gap = q[starts].max(axis=1) - v_star[starts]
    agree = np.mean([np.isclose(q_star[s, q[s].argmax()], v_star[s]) for s in starts])
    print(f"  {name:6s} mean V-V*={gap.mean():+.4f}  worst={np.abs(gap).max():.4f}  "
          f"greedy optimal on {100 * agree:.0f}% of states")

# SARSA(lambda) is on-policy: with tau 0.3 its values sit below Q* (exploration
# costs steps), while Q-learning and Dyna estimate the greedy values directly.

# shaping with an arbitrary potential: F = gamma*phi(s') - phi(s), phi(terminal) = 0
phi = np.random.default_rng(4).normal(size=n) * 3
shaped = r + gamma * np.where(term, 0.0, phi[nxt]) - phi[:, None]
qs = np.zeros((n, 5))
for _ in range(500):
    qs = shaped + gamma * np.where(term, 0.0, qs.max(axis=1)[nxt])

def best(q, s):
    return set(np.flatnonzero(np.isclose(q[s], q[s].max(), rtol=0, atol=1e-9)))


same = all(best(q_star, s) == best(qs, s) for s in starts)
print(f"\nshaped greedy policy equals unshaped: {same}")
print(f"Q_shaped + phi(s) == Q*: {np.allclose(qs[starts] + phi[starts, None], q_star[starts])}")
