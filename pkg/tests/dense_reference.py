"""Dense flat-occupancy reference for one learner iteration, used to cross-check the tree version."""

import math

import numpy as np


def project_bisection(q, lower, iters=200):
    """Information projection onto {p : sum p = 1, p >= lower} by bisection on the scale c."""
    q = np.asarray(q, dtype=float)
    q = q / q.sum()
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.maximum(lower, mid * q).sum() > 1.0:
            hi = mid
        else:
            lo = mid
    c = 0.5 * (lo + hi)
    return np.maximum(lower, c * q)


class DenseReference:
    def __init__(self, n_states, n_actions, config):
        self.mu = np.full((n_states, n_actions), 1.0 / (n_states * n_actions))
        self.h = np.zeros(n_states)
        self.config = config
        self.lower = 1.0 / (math.sqrt(config.tau) * n_states)

    def step(self, i, a, j, reward):
        cfg = self.config
        delta = cfg.beta * (self.h[j] - self.h[i] + reward - cfg.M) / self.mu[i, a]
        half = self.mu.copy()
        half[i, a] *= math.exp(delta)
        half /= half.sum()
        # U only constrains state marginals, so the projection rescales rows
        marg = half.sum(axis=1)
        target = project_bisection(marg, self.lower)
        self.mu = half * (target / marg)[:, None]
        cap = 2 * cfg.t_mix
        if i != j:
            self.h[i] = min(self.h[i] + cfg.alpha, cap)
            self.h[j] = max(self.h[j] - cfg.alpha, -cap)
        return delta
