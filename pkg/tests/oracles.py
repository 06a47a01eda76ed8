"""Independent brute-force oracles shared by the test modules."""

import itertools

import numpy as np


def stationary_eig(P):
    """Stationary vector from the eigenvector of P^T closest to eigenvalue 1."""
    w, v = np.linalg.eig(np.asarray(P).T)
    k = int(np.argmin(np.abs(w - 1.0)))
    nu = np.real(v[:, k])
    return nu / nu.sum()


def policy_value(model, actions):
    S = model.n_states
    P = np.array([model.transition[a, i] for i, a in enumerate(actions)])
    r = np.array([model.transition[a, i] @ model.reward[a, i] for i, a in enumerate(actions)])
    nu = stationary_eig(P)
    return float(nu @ r), nu, P


def brute_force(model):
    """(best gain, tau, t_mix) by looping over every deterministic policy."""
    S, A = model.n_states, model.n_actions
    best, tau, tmix = -np.inf, 1.0, 1
    for actions in itertools.product(range(A), repeat=S):
        value, nu, P = policy_value(model, actions)
        best = max(best, value)
        tau = max(tau, float(np.max((S * nu) ** 2)), float(np.max((S * nu) ** -2.0)))
        tmix = max(tmix, mixing_by_powers(P, nu))
    return best, tau, tmix


def tv_at(P, nu, t):
    Pt = np.linalg.matrix_power(P, t)
    return 0.5 * np.abs(Pt - nu[None, :]).sum(axis=1).max()


def mixing_by_powers(P, nu, cap=10_000):
    for t in range(1, cap):
        if tv_at(P, nu, t) <= 0.25 + 1e-12:
            return t
    raise RuntimeError("no mixing")
