"""Independent reference computations used as test oracles."""
from fractions import Fraction
from functools import lru_cache


def expected_counters(n, K, init, delta=None, epsilon=None):
    """Exact E[N_k], k = 1..K, for the chain started at ``init``, by first-step analysis.

    Rates: progression k -> k+1 at (1+delta_k) a_k, infection into k at
    (1+epsilon_k) a_k a_0 / n. The weighted sum of stages strictly increases at
    every transition, so the reachable graph is acyclic and a memoised
    recursion over it is exact. Rational inputs give a rational answer.
    """
    one = Fraction(1)
    delta = [Fraction(d) for d in (delta or [0] * K)]
    epsilon = [Fraction(e) for e in (epsilon or [0] * K)]
    init = tuple(init)
    assert len(init) == K + 2 and sum(init) == n

    @lru_cache(maxsize=None)
    def future(state):
        moves = []
        for k in range(1, K + 1):
            if state[k] == 0:
                continue
            rate = (one + delta[k - 1]) * state[k]
            nxt = list(state)
            nxt[k] -= 1
            nxt[k + 1] += 1
            gain = [0] * K
            if k + 1 <= K:
                gain[k] = 1
            moves.append((rate, tuple(nxt), gain))
            rate = (one + epsilon[k - 1]) * state[k] * state[0] / n
            if rate > 0:
                nxt = list(state)
                nxt[0] -= 1
                nxt[k] += 1
                gain = [0] * K
                gain[k - 1] = 1
                moves.append((rate, tuple(nxt), gain))
        total = sum(r for r, _, _ in moves)
        if total == 0:
            return (Fraction(0),) * K
        acc = [Fraction(0)] * K
        for rate, nxt, gain in moves:
            sub = future(nxt)
            for k in range(K):
                acc[k] += rate / total * (gain[k] + sub[k])
        return tuple(acc)

    start = [Fraction(init[k]) for k in range(1, K + 1)]
    return [s + f for s, f in zip(start, future(init))]


def feller_zero_probability(z0, gamma, t):
    """P(Z_t = 0) for dZ = gamma Z dt + sqrt(2Z) dB started at z0."""
    import math

    c = t if gamma == 0 else (math.exp(gamma * t) - 1.0) / gamma
    return math.exp(-z0 * math.exp(gamma * t) / c)
