"""Tabular average-reward MDP model, policies, generators and the instance file format."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

STOCHASTIC_TOL = 1e-12


class ModelError(ValueError):
    """A model or policy violates its invariants."""


class ParseError(ModelError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Finite AMDP with transition ``p[a, i, j]`` and reward ``r[a, i, j]``.

    Rewards are kept per transition triple; expected per-action reward vectors
    are derived on demand by :func:`expected_reward_vectors`.
    """

    transition: np.ndarray
    reward: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        if p.ndim != 3 or p.shape[1] != p.shape[2] or p.shape[0] < 1 or p.shape[1] < 1:
            raise ModelError(f"transition must have shape (A, S, S), got {p.shape}")
        if r.shape != p.shape:
            raise ModelError(f"reward shape {r.shape} does not match transition {p.shape}")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MdpModel):
            return NotImplemented
        return (np.array_equal(self.transition, other.transition)
                and np.array_equal(self.reward, other.reward))

    __hash__ = None


@dataclass(frozen=True)
class PolicyChain:
    """Markov reward process induced by a fixed policy."""

    transition_matrix: np.ndarray
    expected_reward: np.ndarray

    @property
    def n_states(self) -> int:
        return self.transition_matrix.shape[0]


def validate_model(model: MdpModel, tol: float = STOCHASTIC_TOL) -> list[str]:
    """Return one message per violated constraint; an empty list means valid."""
    problems = []
    p, r = model.transition, model.reward
    for a, i in zip(*np.nonzero(np.any(p < 0, axis=2))):
        js = np.flatnonzero(p[a, i] < 0)
        problems.append(f"negative probability at (a={a}, i={i}, j={int(js[0])})")
    sums = p.sum(axis=2)
    for a, i in zip(*np.nonzero(np.abs(sums - 1.0) > tol)):
        problems.append(f"row (a={a}, i={i}) sums to {sums[a, i]!r}, expected 1")
    bad = ~((r >= 0.0) & (r <= 1.0))
    for a, i, j in zip(*np.nonzero(bad)):
        problems.append(f"reward {r[a, i, j]!r} at (a={a}, i={i}, j={j}) outside [0, 1]")
    return problems


def check_model(model: MdpModel) -> MdpModel:
    problems = validate_model(model)
    if problems:
        raise ModelError("; ".join(problems))
    return model


def expected_reward_vectors(model: MdpModel) -> np.ndarray:
    """``r_a[i] = sum_j p[a,i,j] * r[a,i,j]``, returned with shape (A, S)."""
    return np.einsum("aij,aij->ai", model.transition, model.reward)


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

def validate_policy(policy, n_states: int | None = None, n_actions: int | None = None,
                    tol: float = STOCHASTIC_TOL) -> np.ndarray:
    """Check a (S, A) row-stochastic matrix and return it as a float array."""
    pi = np.asarray(policy, dtype=float)
    if pi.ndim != 2:
        raise ModelError(f"policy must be a (S, A) matrix, got shape {pi.shape}")
    if n_states is not None and pi.shape[0] != n_states:
        raise ModelError(f"policy has {pi.shape[0]} states, model has {n_states}")
    if n_actions is not None and pi.shape[1] != n_actions:
        raise ModelError(f"policy has {pi.shape[1]} actions, model has {n_actions}")
    if np.any(pi < 0):
        raise ModelError("policy has negative entries")
    bad = np.flatnonzero(np.abs(pi.sum(axis=1) - 1.0) > tol)
    if bad.size:
        raise ModelError(f"policy row {int(bad[0])} does not sum to 1")
    return pi


def deterministic_policy(actions, n_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=int)
    pi = np.zeros((actions.size, n_actions))
    pi[np.arange(actions.size), actions] = 1.0
    return pi


def uniform_policy(n_states: int, n_actions: int) -> np.ndarray:
    return np.full((n_states, n_actions), 1.0 / n_actions)


def induced_chain(model: MdpModel, policy) -> PolicyChain:
    """``P^pi = sum_a diag(pi_a) P_a`` and ``r^pi = sum_a diag(pi_a) r_a``."""
    pi = np.asarray(policy, dtype=float)
    if pi.shape != (model.n_states, model.n_actions):
        raise ModelError(
            f"policy shape {pi.shape} does not match model ({model.n_states}, {model.n_actions})")
    P = np.einsum("ia,aij->ij", pi, model.transition)
    r = np.einsum("ia,ai->i", pi, expected_reward_vectors(model))
    return PolicyChain(P, r)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_random_ergodic(n_states: int, n_actions: int, smoothing: float,
                            seed) -> MdpModel:
    """Random model whose rows mix a Dirichlet(1) draw with the uniform row.

    Every entry is at least ``smoothing / n_states``, so each policy induces a
    chain with all-positive transition matrix.
    """
    if n_states < 1 or n_actions < 1:
        raise ModelError("n_states and n_actions must be positive")
    if not 0.0 < smoothing <= 1.0:
        raise ModelError(f"smoothing must lie in (0, 1], got {smoothing}")
    rng = np.random.default_rng(seed)
    shape = (n_actions, n_states, n_states)
    p = rng.standard_exponential(shape)
    p /= p.sum(axis=2, keepdims=True)
    p *= 1.0 - smoothing
    p += smoothing / n_states
    if smoothing == 1.0:
        p[...] = 1.0 / n_states
    reward = rng.random(shape)
    return MdpModel(p, reward)


def ring_switch(n_states: int, smoothing: float = 0.5) -> MdpModel:
    """States on a cycle; action 0 stays (reward 0), action 1 advances to ``i + 1`` (reward 1).

    Rows are mixed with the uniform row by ``smoothing``. Always advancing is
    optimal with average reward 1.
    """
    if n_states < 1:
        raise ModelError("n_states must be positive")
    stay = np.eye(n_states)
    advance = np.roll(np.eye(n_states), 1, axis=1)
    p = np.stack([stay, advance])
    p = (1.0 - smoothing) * p + smoothing / n_states
    r = np.zeros_like(p)
    r[1] = 1.0
    return MdpModel(p, r)


def two_state_switch(smoothing: float = 0.5) -> MdpModel:
    """Two states, action 0 stays (reward 0), action 1 switches (reward 1).

    Rows are mixed with the uniform row by ``smoothing`` so every policy is
    ergodic; with ``smoothing=0`` this is the bare deterministic instance,
    which is reducible under "stay" and periodic under "switch".
    """
    return ring_switch(2, smoothing)


def two_state_chain() -> MdpModel:
    """Single-action chain P = [[0.9, 0.1], [0.2, 0.8]] paying 1 in state 0, 0 in state 1."""
    p = np.array([[[0.9, 0.1], [0.2, 0.8]]])
    r = np.array([[[1.0, 1.0], [0.0, 0.0]]])
    return MdpModel(p, r)


# ---------------------------------------------------------------------------
# instance files
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def format_model(model: MdpModel) -> str:
    check_model(model)
    S, A = model.n_states, model.n_actions
    lines = [f"amdp {S} {A}"]
    for a in range(A):
        for i in range(S):
            lines.append(f"p {a} {i} " + " ".join(map(_fmt, model.transition[a, i])))
            lines.append(f"r {a} {i} " + " ".join(map(_fmt, model.reward[a, i])))
    return "\n".join(lines) + "\n"


def write_model(model: MdpModel, path) -> None:
    Path(path).write_text(format_model(model), encoding="utf-8")


def parse_model(text: str) -> MdpModel:
    lines = text.splitlines()
    lineno = 0

    def next_line():
        nonlocal lineno
        while lineno < len(lines):
            lineno += 1
            stripped = lines[lineno - 1].strip()
            if stripped and not stripped.startswith("#"):
                return stripped.split()
        return None

    header = next_line()
    if header is None or header[0] != "amdp" or len(header) != 3:
        raise ParseError("expected header 'amdp <n_states> <n_actions>'", lineno or 1)
    try:
        S, A = int(header[1]), int(header[2])
    except ValueError:
        raise ParseError("state and action counts must be integers", lineno) from None
    if S < 1 or A < 1:
        raise ParseError("state and action counts must be positive", lineno)

    p = np.empty((A, S, S))
    r = np.empty((A, S, S))
    for a in range(A):
        for i in range(S):
            for kind, dest in (("p", p), ("r", r)):
                fields = next_line()
                where = f"{kind} row for (a={a}, i={i})"
                if fields is None:
                    raise ParseError(f"missing {where}", lineno + 1)
                if fields[0] != kind or fields[1:3] != [str(a), str(i)]:
                    raise ParseError(f"expected {where}, found '{' '.join(fields[:3])}'", lineno)
                if len(fields) != S + 3:
                    raise ParseError(f"{where} has {len(fields) - 3} values, expected {S}", lineno)
                try:
                    dest[a, i] = [float(x) for x in fields[3:]]
                except ValueError as exc:
                    raise ParseError(f"bad number in {where}: {exc}", lineno) from None
    if next_line() is not None:
        raise ParseError("unexpected trailing content", lineno)
    return check_model(MdpModel(p, r))


def read_model(path) -> MdpModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def format_policy(policy) -> str:
    pi = np.asarray(policy, dtype=float)
    lines = [f"policy {pi.shape[0]} {pi.shape[1]}"]
    lines += [" ".join(map(_fmt, row)) for row in pi]
    return "\n".join(lines) + "\n"


def write_policy(policy, path) -> None:
    Path(path).write_text(format_policy(policy), encoding="utf-8")


def read_policy(path) -> np.ndarray:
    lines = [ln.split() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or lines[0][0] != "policy" or len(lines[0]) != 3:
        raise ParseError("expected header 'policy <n_states> <n_actions>'", 1)
    S, A = int(lines[0][1]), int(lines[0][2])
    if len(lines) != S + 1:
        raise ParseError(f"expected {S} policy rows, found {len(lines) - 1}", len(lines))
    rows = []
    for k, fields in enumerate(lines[1:], start=2):
        if len(fields) != A:
            raise ParseError(f"policy row has {len(fields)} entries, expected {A}", k)
        rows.append([float(x) for x in fields])
    return validate_policy(np.array(rows), S, A, tol=1e-9)
