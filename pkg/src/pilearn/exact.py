"""Ground truth for small instances: optimal gain, bias, occupancy, tau and mixing time."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mdp import (MdpModel, ModelError, PolicyChain, deterministic_policy,
                  expected_reward_vectors, induced_chain, validate_policy)

DEFAULT_ENUMERATION_BUDGET = 10**6
MIXING_CAP = 10**6
_TV_THRESHOLD = 0.25
_CHUNK = 1 << 14


class NonErgodicError(ValueError):
    """Chain is reducible or periodic. ``witness`` is a state pair ``(i, j)``."""

    def __init__(self, message: str, witness: tuple[int, int], kind: str):
        super().__init__(message)
        self.witness = witness
        self.kind = kind


class MixingTimeError(RuntimeError):
    pass


class BudgetExceeded(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


def _matrix(chain) -> np.ndarray:
    if isinstance(chain, PolicyChain):
        return chain.transition_matrix
    return np.asarray(chain, dtype=float)


# ---------------------------------------------------------------------------
# ergodicity
# ---------------------------------------------------------------------------

def _bool_power(pattern: np.ndarray, k: int) -> np.ndarray:
    """Support of ``pattern**k`` for a (batch of) 0/1 matrices."""
    result = None
    base = pattern
    while k:
        if k & 1:
            result = base if result is None else np.minimum(result @ base, 1.0)
        k >>= 1
        if k:
            base = np.minimum(base @ base, 1.0)
    return result


def _ergodic_mask(P: np.ndarray) -> np.ndarray:
    """Primitivity of each matrix in a (B, S, S) batch (Wielandt exponent (S-1)^2 + 1)."""
    S = P.shape[-1]
    pattern = (P > 0.0).astype(float)
    power = _bool_power(pattern, (S - 1) ** 2 + 1)
    return power.reshape(P.shape[0], -1).min(axis=1) > 0.0


def check_ergodic(chain) -> None:
    """Raise :class:`NonErgodicError` unless some power of the chain is entrywise positive."""
    P = _matrix(chain)
    S = P.shape[0]
    pattern = (P > 0.0).astype(float)
    reach = _bool_power(np.minimum(pattern + np.eye(S), 1.0), max(S - 1, 1))
    zeros = np.argwhere(reach == 0.0)
    if zeros.size:
        i, j = map(int, zeros[0])
        raise NonErgodicError(f"reducible chain: state {j} is not reachable from state {i}",
                              (i, j), "reducible")
    power = _bool_power(pattern, (S - 1) ** 2 + 1)
    zeros = np.argwhere(power == 0.0)
    if zeros.size:
        i, j = map(int, zeros[0])
        raise NonErgodicError(
            f"periodic chain: P^{(S - 1) ** 2 + 1}[{i}, {j}] = 0", (i, j), "periodic")


# ---------------------------------------------------------------------------
# single chains
# ---------------------------------------------------------------------------

def _stationary_batch(P: np.ndarray) -> np.ndarray:
    B, S, _ = P.shape
    system = np.swapaxes(P, 1, 2) - np.eye(S)
    system[:, -1, :] = 1.0
    rhs = np.zeros((B, S, 1))
    rhs[:, -1, 0] = 1.0
    return np.linalg.solve(system, rhs)[:, :, 0]


def stationary_distribution(chain) -> np.ndarray:
    """Unique ``nu`` with ``P^T nu = nu``, ``sum(nu) = 1`` for an ergodic chain."""
    P = _matrix(chain)
    check_ergodic(P)
    nu = _stationary_batch(P[None])[0]
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


def average_reward(model: MdpModel, policy) -> float:
    chain = induced_chain(model, validate_policy(policy, model.n_states, model.n_actions))
    return float(stationary_distribution(chain) @ chain.expected_reward)


def _tv_rows(Pt: np.ndarray, nu: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(Pt - nu[:, None, :]).sum(axis=2).max(axis=1)


def _mixing_batch(P: np.ndarray, nu: np.ndarray, cap: int = MIXING_CAP) -> np.ndarray:
    B = P.shape[0]
    result = np.zeros(B, dtype=np.int64)
    active = np.arange(B)
    Pt = P.copy()
    for t in range(1, cap + 1):
        done = _tv_rows(Pt, nu[active]) <= _TV_THRESHOLD + 1e-12
        result[active[done]] = t
        keep = ~done
        if not keep.any():
            return result
        active, Pt = active[keep], Pt[keep]
        Pt = Pt @ P[active]
    raise MixingTimeError(f"mixing time exceeds cap of {cap} steps")


def mixing_time(chain, cap: int = MIXING_CAP) -> int:
    """Smallest t >= 1 with ``max_i TV(P^t(i, .), nu) <= 1/4``."""
    P = _matrix(chain)
    nu = stationary_distribution(P)
    return int(_mixing_batch(P[None], nu[None], cap)[0])


def bias_vector(chain: PolicyChain, nu: np.ndarray, gain: float) -> np.ndarray:
    """Solve ``[I - P; nu^T] h = [r - gain; 0]`` in the least-squares sense."""
    P, r = chain.transition_matrix, chain.expected_reward
    S = P.shape[0]
    system = np.vstack([np.eye(S) - P, nu[None, :]])
    rhs = np.concatenate([r - gain, [0.0]])
    h = np.linalg.lstsq(system, rhs, rcond=None)[0]
    residual = float(np.abs(system @ h - rhs).max())
    if residual > 1e-10:
        raise SolverError(f"bias system residual {residual:.3e} exceeds 1e-10")
    return h


# ---------------------------------------------------------------------------
# deterministic policy enumeration
# ---------------------------------------------------------------------------

@dataclass
class PolicySweep:
    """Per-policy results over all deterministic policies, in lexicographic order."""

    actions: np.ndarray  # (N, S)
    gains: np.ndarray  # (N,)
    stationary: np.ndarray  # (N, S)
    mixing: np.ndarray | None  # (N,)


def _policy_actions(start: int, stop: int, S: int, A: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    powers = A ** np.arange(S - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers[None, :]) % A


def enumerate_policies(model: MdpModel, budget: int = DEFAULT_ENUMERATION_BUDGET,
                       with_mixing: bool = True) -> PolicySweep:
    S, A = model.n_states, model.n_actions
    total = A ** S
    if total > budget:
        raise BudgetExceeded(f"|A|^|S| = {total} deterministic policies exceeds budget {budget}")
    r_a = expected_reward_vectors(model)
    states = np.arange(S)
    parts = []
    for start in range(0, total, _CHUNK):
        actions = _policy_actions(start, min(start + _CHUNK, total), S, A)
        P = model.transition[actions, states[None, :]]
        ok = _ergodic_mask(P)
        if not ok.all():
            bad = actions[np.flatnonzero(~ok)[0]]
            try:
                check_ergodic(P[np.flatnonzero(~ok)[0]])
            except NonErgodicError as exc:
                raise NonErgodicError(f"deterministic policy {bad.tolist()}: {exc}",
                                      exc.witness, exc.kind) from None
        nu = _stationary_batch(P)
        gains = np.einsum("bs,bs->b", nu, r_a[actions, states[None, :]])
        mix = _mixing_batch(P, nu) if with_mixing else None
        parts.append((actions, gains, nu, mix))
    return PolicySweep(
        actions=np.concatenate([p[0] for p in parts]),
        gains=np.concatenate([p[1] for p in parts]),
        stationary=np.concatenate([p[2] for p in parts]),
        mixing=np.concatenate([p[3] for p in parts]) if with_mixing else None,
    )


def _tau_from_stationary(nu: np.ndarray) -> float:
    scaled = nu.shape[-1] * nu
    return float(max((scaled ** 2).max(), (scaled ** -2.0).max()))


def compute_tau_tmix(model: MdpModel,
                     enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET) -> tuple[float, int]:
    """Exact tau and mixing-time bound over the deterministic policy class.

    This is a lower estimate of the quantities over all stationary policies.
    """
    sweep = enumerate_policies(model, enumeration_budget, with_mixing=True)
    return _tau_from_stationary(sweep.stationary), int(sweep.mixing.max())


def policy_iteration(model: MdpModel, max_iter: int = 10_000) -> np.ndarray:
    """Howard policy iteration on the average-reward criterion.

    Keeps the incumbent action unless another is strictly better by 1e-12,
    so it stops on the first policy satisfying the Bellman optimality test.
    """
    S = model.n_states
    r_a = expected_reward_vectors(model)
    states = np.arange(S)
    actions = r_a.argmax(axis=0)
    seen = set()
    for _ in range(max_iter):
        chain = induced_chain(model, deterministic_policy(actions, model.n_actions))
        nu = stationary_distribution(chain)
        h = bias_vector(chain, nu, float(nu @ chain.expected_reward))
        q = r_a + model.transition @ h
        current = q[actions, states]
        better = q.max(axis=0) > current + 1e-12
        if not better.any():
            return actions
        seen.add(tuple(actions))
        actions = np.where(better, q.argmax(axis=0), actions)
        if tuple(actions) in seen:
            raise SolverError(f"policy iteration cycled at policy {actions.tolist()}")
    raise SolverError(f"policy iteration did not converge in {max_iter} iterations")


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------

@dataclass
class GroundTruth:
    v_star: float
    h_star: np.ndarray
    mu_star: np.ndarray  # (S, A)
    pi_star: np.ndarray  # (S, A)
    nu_star: np.ndarray
    tau: float | None
    t_mix: int | None

    def invariant_report(self, model: MdpModel, tol: float = 1e-9) -> list[tuple[str, float, bool]]:
        """(name, measured value, passed) for every ground-truth invariant."""
        checks = []
        bellman = bellman_residual(model, self.v_star, self.h_star)
        checks.append(("bellman_residual", bellman, bellman <= tol))
        norm = abs(float(self.nu_star @ self.h_star))
        checks.append(("normalization", norm, norm <= tol))
        if self.t_mix is not None:
            hmax = float(np.abs(self.h_star).max())
            checks.append(("h_star_bound", hmax, hmax <= 2 * self.t_mix + tol))
        try:
            dual = dual_feasibility_residual(model, self.mu_star)
        except ModelError:
            dual = float("inf")
        checks.append(("dual_feasibility", dual, dual <= tol))
        if self.tau is not None:
            floor = 1.0 / (np.sqrt(self.tau) * model.n_states)
            slack = float((self.mu_star.sum(axis=1) - floor).min())
            checks.append(("mu_star_in_U", slack, slack >= -1e-12))
        vrange = self.v_star
        checks.append(("v_star_range", vrange, -tol <= vrange <= 1 + tol))
        return checks


def solve_optimal(model: MdpModel, enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET,
                  method: str = "auto") -> GroundTruth:
    """Optimal gain, bias, occupancy and (when enumerable) tau / t_mix.

    ``method`` is ``"enumerate"``, ``"policy_iteration"`` or ``"auto"`` (enumerate
    when ``|A|^|S|`` fits the budget).
    """
    S, A = model.n_states, model.n_actions
    enumerable = A ** S <= enumeration_budget
    if method == "auto":
        method = "enumerate" if enumerable else "policy_iteration"
    tau = t_mix = None
    if method == "enumerate":
        sweep = enumerate_policies(model, enumeration_budget, with_mixing=True)
        actions = sweep.actions[int(np.argmax(sweep.gains))]
        tau = _tau_from_stationary(sweep.stationary)
        t_mix = int(sweep.mixing.max())
    elif method == "policy_iteration":
        try:
            actions = policy_iteration(model)
        except SolverError as exc:
            if not enumerable:
                raise SolverError(f"|A|^|S| = {A ** S} exceeds enumeration budget "
                                  f"{enumeration_budget} and {exc}") from None
            raise
    else:
        raise ValueError(f"unknown method {method!r}")

    pi_star = deterministic_policy(actions, A)
    chain = induced_chain(model, pi_star)
    nu = stationary_distribution(chain)
    v_star = float(nu @ chain.expected_reward)
    h_star = bias_vector(chain, nu, v_star)
    return GroundTruth(v_star=v_star, h_star=h_star, mu_star=nu[:, None] * pi_star,
                       pi_star=pi_star, nu_star=nu, tau=tau, t_mix=t_mix)


def bellman_residual(model: MdpModel, v: float, h) -> float:
    h = np.asarray(h, dtype=float)
    q = expected_reward_vectors(model) + model.transition @ h
    return float(np.abs(v + h - q.max(axis=0)).max())


def dual_feasibility_residual(model: MdpModel, mu) -> float:
    """``|| sum_a (I - P_a^T) mu_a ||_inf`` for an occupancy ``mu`` of shape (S, A)."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (model.n_states, model.n_actions):
        raise ModelError(f"mu shape {mu.shape} does not match model")
    if np.any(mu < 0):
        raise ModelError("mu has negative entries")
    if abs(mu.sum() - 1.0) > 1e-9:
        raise ModelError(f"mu sums to {mu.sum()!r}, expected 1")
    flow = mu.sum(axis=1) - np.einsum("ia,aij->j", mu, model.transition)
    return float(np.abs(flow).max())


def gap_identity_check(model: MdpModel, policy, truth: GroundTruth) -> tuple[float, float]:
    """Both sides of ``v* - v^pi = nu^T sum_a diag(pi_a)(v* 1 + (I - P_a) h* - r_a)``."""
    pi = validate_policy(policy, model.n_states, model.n_actions)
    chain = induced_chain(model, pi)
    nu = stationary_distribution(chain)
    lhs = truth.v_star - float(nu @ chain.expected_reward)
    h = truth.h_star
    slack = truth.v_star + h[None, :] - model.transition @ h - expected_reward_vectors(model)
    rhs = float(nu @ np.einsum("ia,ai->i", pi, slack))
    return lhs, rhs


# ---------------------------------------------------------------------------
# truth sidecar
# ---------------------------------------------------------------------------

def _num(x) -> str:
    return "null" if x is None else format(float(x), ".17g")


def _vec(xs) -> str:
    return "[" + ", ".join(_num(x) for x in xs) + "]"


def format_truth(truth: GroundTruth) -> str:
    fields = [
        ("v_star", _num(truth.v_star)),
        ("tau", _num(truth.tau)),
        ("t_mix", "null" if truth.t_mix is None else str(int(truth.t_mix))),
        ("tau_is_lower_estimate", "true"),
        ("h_star", _vec(truth.h_star)),
        ("nu_star", _vec(truth.nu_star)),
        ("pi_star", "[" + ", ".join(_vec(row) for row in truth.pi_star) + "]"),
        ("mu_star", "[" + ", ".join(_vec(row) for row in truth.mu_star) + "]"),
    ]
    body = ",\n".join(f'  "{k}": {v}' for k, v in fields)
    return "{\n" + body + "\n}\n"


def write_truth(truth: GroundTruth, path) -> None:
    Path(path).write_text(format_truth(truth), encoding="utf-8")


def read_truth(path) -> GroundTruth:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return GroundTruth(
        v_star=float(data["v_star"]),
        h_star=np.array(data["h_star"], dtype=float),
        mu_star=np.array(data["mu_star"], dtype=float),
        pi_star=np.array(data["pi_star"], dtype=float),
        nu_star=np.array(data["nu_star"], dtype=float),
        tau=None if data["tau"] is None else float(data["tau"]),
        t_mix=None if data["t_mix"] is None else int(data["t_mix"]),
    )


def truth_path(instance_path) -> Path:
    p = Path(instance_path)
    return p.with_name(p.name + ".truth")
