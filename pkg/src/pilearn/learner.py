"""Primal-dual pi learning for ergodic average-reward MDPs.

Each iteration samples a state-action pair from the current occupancy
``mu[i, a] = xi[i] * pi[i, a]``, queries the oracle once, moves the value
vector ``h`` by a clipped coordinate step and the occupancy by a
multiplicative step followed by an information projection onto
``{mu : sum_a mu_a >= 1/(sqrt(tau) |S|)}``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exact import GroundTruth, average_reward
from .mdp import MdpModel, expected_reward_vectors
from .sampling import SamplingOracle, WeightTree

_UNIFORM_BLOCK = 4096
# rescale thresholds keeping the unnormalized weights away from underflow
_XI_RESCALE = 1e-150
_PI_RESCALE = 2.0 ** -64
_PI_FLOOR = 1e-300


class InvariantError(AssertionError):
    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class LearnerConfig:
    t_mix: float
    tau: float
    epsilon: float
    T: int
    beta: float
    alpha: float
    M: float
    seed: int | None = None

    def __post_init__(self):
        if not self.t_mix > 0:
            raise ValueError(f"t_mix must be positive, got {self.t_mix}")
        if not self.tau >= 1:
            raise ValueError(f"tau must be at least 1, got {self.tau}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if self.beta < 0 or self.alpha < 0:
            raise ValueError("step sizes must be nonnegative")
        if self.M < 4 * self.t_mix + 1:
            raise ValueError("M below 4 t_mix + 1 breaks the sign of the dual increment")

    @classmethod
    def default(cls, n_states: int, n_actions: int, t_mix: float, tau: float,
                epsilon: float, seed=None, T: int | None = None, **overrides) -> "LearnerConfig":
        """Iteration count and step sizes from the sample-complexity analysis.

        ``T = ceil(tau^2 t_mix^2 |S||A| / eps^2)``,
        ``beta = sqrt(log(|S||A|) / (2 |S||A| T)) / t_mix`` and
        ``alpha = |S| t_mix^2 beta``.
        """
        sa = n_states * n_actions
        if not (epsilon > 0 and t_mix > 0 and tau >= 1):
            raise ValueError(f"need epsilon > 0, t_mix > 0 and tau >= 1, got {epsilon}, {t_mix}, {tau}")
        if T is None:
            T = math.ceil(tau ** 2 * t_mix ** 2 * sa / epsilon ** 2 - 1e-9)
        beta = overrides.pop("beta", math.sqrt(math.log(sa) / (2 * sa * T)) / t_mix)
        alpha = overrides.pop("alpha", n_states * t_mix ** 2 * beta)
        M = overrides.pop("M", 4 * t_mix + 1)
        if overrides:
            raise TypeError(f"unknown overrides {sorted(overrides)}")
        return cls(t_mix=t_mix, tau=tau, epsilon=epsilon, T=int(T), beta=beta, alpha=alpha,
                   M=M, seed=seed)


# ---------------------------------------------------------------------------
# elementary updates
# ---------------------------------------------------------------------------

def kl_project_lower_bounded(q, lower: float) -> np.ndarray:
    """argmin_p KL(p || q) over the simplex intersected with ``p >= lower``.

    The minimizer is ``p = max(lower, c * q / sum(q))`` for the scalar ``c``
    making ``p`` sum to one; the clamped set is the ``k`` smallest entries
    for the least ``k`` consistent with that ``c``.
    """
    q = np.asarray(q, dtype=float)
    n = q.size
    if lower < 0:
        raise ValueError("lower bound must be nonnegative")
    if n * lower > 1.0 + 1e-12:
        raise ValueError(f"infeasible: {n} * {lower} > 1")
    if np.any(q < 0) or not q.sum() > 0:
        raise ValueError("q must be nonnegative with a positive entry")
    qn = q / q.sum()
    order = np.argsort(qn, kind="stable")
    ascending = qn[order]
    # free mass if the k smallest are clamped, k = 0..n-1
    tail = np.cumsum(ascending[::-1])[::-1]
    k = np.arange(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (1.0 - k * lower) / tail
    feasible = (c * ascending >= lower) & (tail > 0)
    p = np.full(n, lower)
    if feasible.any():
        kk = int(np.argmax(feasible))
        p[order[kk:]] = c[kk] * ascending[kk:]
    return p


def dual_increment(h, i: int, a: int, j: int, reward: float, mu_ia: float,
                   config: LearnerConfig) -> float:
    """``beta * (h_j - h_i + r - M) / mu_ia``; nonpositive whenever h lies in the box."""
    if not mu_ia > 0.0:
        raise FloatingPointError(f"occupancy of ({i}, {a}) is {mu_ia}; expected positive")
    return config.beta * (h[j] - h[i] + reward - config.M) / mu_ia


def primal_increment_apply(h, i: int, j: int, config: LearnerConfig) -> None:
    """In-place ``h <- clip(h + alpha (e_i - e_j), -2 t_mix, 2 t_mix)``."""
    if i == j:
        return
    cap = 2.0 * config.t_mix
    hi = h[i] + config.alpha
    h[i] = hi if hi < cap else cap
    hj = h[j] - config.alpha
    h[j] = hj if hj > -cap else -cap


def dual_update_apply(dual: "DualIterate", i: int, a: int, delta: float,
                      config: LearnerConfig | None = None) -> None:
    dual.apply(i, a, delta)


class DualIterate:
    """Occupancy ``mu = xi * pi`` stored as one state tree and one action tree per state.

    ``xi = w / sum(w)`` and ``pi[i] = u_i / sum(u_i)`` for unnormalized tree
    weights, so renormalization is free and only touched leaves change.
    """

    def __init__(self, n_states: int, n_actions: int, lower: float):
        if n_states * lower > 1.0 + 1e-12:
            raise ValueError("lower bound infeasible for this many states")
        self.n_states = n_states
        self.n_actions = n_actions
        self.lower = lower
        self.xi_tree = WeightTree([1.0] * n_states)
        self.pi_trees = [WeightTree([1.0] * n_actions) for _ in range(n_states)]

    def xi(self, i: int) -> float:
        return self.xi_tree.weight(i) / self.xi_tree.total()

    def pi(self, i: int, a: int) -> float:
        row = self.pi_trees[i]
        return row.weight(a) / row.total()

    def mu(self, i: int, a: int) -> float:
        return self.xi(i) * self.pi(i, a)

    def sample(self, u_state: float, u_action: float) -> tuple[int, int]:
        i = self.xi_tree.sample(u_state)
        return i, self.pi_trees[i].sample(u_action)

    def apply(self, i: int, a: int, delta: float) -> None:
        """Multiplicative step on ``mu[i, a]``, then KL projection of the state marginal.

        With ``delta <= 0`` only ``xi[i]`` can fall below the floor; the
        projection rescales every other entry by a common factor and either
        keeps ``xi[i]`` proportional as well or pins it to the floor.
        """
        if delta > 0.0:
            raise ValueError(f"dual increment must be nonpositive, got {delta}")
        em1 = math.expm1(delta)
        row = self.pi_trees[i]
        u = row.weight(a)
        pi_ia = u / row.total()

        tree = self.xi_tree
        total = tree.total()
        w = tree.weight(i)
        w_new = w * (1.0 + pi_ia * em1)
        rest = total - w
        if w_new < self.lower * (rest + w_new):
            w_new = self.lower * rest / (1.0 - self.lower)
        if not w_new > 0.0:
            raise FloatingPointError(f"state weight of {i} became {w_new}")
        tree.update(i, w_new)
        if tree.total() < _XI_RESCALE:
            tree.scale(1.0 / tree.total())

        u_new = u * (em1 + 1.0)
        row.update(a, u_new if u_new > _PI_FLOOR else _PI_FLOOR)
        if row.total() < _PI_RESCALE:
            row.scale(1.0 / row.total())

    def xi_vector(self) -> np.ndarray:
        w = np.array(self.xi_tree.weights())
        return w / w.sum()

    def pi_matrix(self) -> np.ndarray:
        rows = np.array([t.weights() for t in self.pi_trees])
        return rows / rows.sum(axis=1, keepdims=True)

    def mu_matrix(self) -> np.ndarray:
        return self.xi_vector()[:, None] * self.pi_matrix()


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def duality_gap(model: MdpModel, truth: GroundTruth, mu) -> float:
    """``sum_a (h* - P_a h* - r_a)^T mu_a + v*`` for an occupancy of shape (S, A)."""
    mu = np.asarray(mu, dtype=float)
    return float(np.sum(mu * _gap_coefficients(model, truth)))


def _gap_coefficients(model: MdpModel, truth: GroundTruth) -> np.ndarray:
    # v* + (h* - P_a h* - r_a)_i, shape (S, A); nonnegative by primal feasibility
    h = truth.h_star
    c = truth.v_star + h[None, :] - model.transition @ h - expected_reward_vectors(model)
    return c.T.copy()


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    support = p > 0
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def second_moment(model: MdpModel, h, beta: float, M: float) -> float:
    """Exact ``sum_{i,a} mu_ia E[Delta_ia^2]`` for the current ``h`` (independent of ``mu``)."""
    h = np.asarray(h, dtype=float)
    x = h[None, None, :] - h[None, :, None] + model.reward - M
    return float(np.sum(model.transition * (beta * x) ** 2))


def checkpoint_schedule(T: int) -> list[int]:
    ts = []
    t = 1
    while t < T:
        ts.append(t)
        t *= 2
    ts.append(T)
    return ts


@dataclass
class GapDiagnostics:
    """Checkpoint records; ``gap`` is the instantaneous G^t, ``mean_gap`` its running mean."""

    t: list[int] = field(default_factory=list)
    gap: list[float] = field(default_factory=list)
    mean_gap: list[float] = field(default_factory=list)
    E: list[float] = field(default_factory=list)
    vbar_hat: list[float] = field(default_factory=list)
    queries: list[int] = field(default_factory=list)
    elapsed_ns: list[int] = field(default_factory=list)

    CSV_HEADER = "t,gap,E,vbar_hat,queries,elapsed_ns"

    def to_csv(self, path=None, timing: bool = True) -> str:
        rows = [self.CSV_HEADER]
        for k in range(len(self.t)):
            rows.append(",".join([
                str(self.t[k]), format(self.gap[k], ".17g"), format(self.E[k], ".17g"),
                format(self.vbar_hat[k], ".17g"), str(self.queries[k]),
                str(self.elapsed_ns[k]) if timing else "0",
            ]))
        text = "\n".join(rows) + "\n"
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text


# ---------------------------------------------------------------------------
# the learner
# ---------------------------------------------------------------------------

class PiLearner:
    """State of one run: value vector, dual iterate, policy average and gap accounting."""

    def __init__(self, oracle: SamplingOracle, config: LearnerConfig, rng=None,
                 truth: GroundTruth | None = None):
        model = oracle.model
        self.oracle = oracle
        self.config = config
        self.n_states = S = model.n_states
        self.n_actions = A = model.n_actions
        self.lower = 1.0 / (math.sqrt(config.tau) * S)
        self.h = [0.0] * S
        self.dual = DualIterate(S, A, self.lower)
        self.t = 0
        self._rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._buf: list[float] = []
        self._pos = 0
        # running sum of pi^1..pi^t, flushed per row when the row changes
        self._acc = [[0.0] * A for _ in range(S)]
        self._since = [1] * S
        self.truth = truth
        self._coef = None
        if truth is not None:
            self._coef = _gap_coefficients(model, truth).tolist()
            self._refresh_gap()
        self.gap_sum = 0.0

    # -- uniforms -------------------------------------------------------------
    def _uniform(self) -> float:
        pos = self._pos
        if pos == len(self._buf):
            self._buf = self._rng.random(_UNIFORM_BLOCK).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    # -- gap bookkeeping --------------------------------------------------------
    def _row_gap(self, i: int) -> float:
        row = self.dual.pi_trees[i]
        coef = self._coef[i]
        return sum(u * c for u, c in zip(row.weights(), coef)) / row.total()

    def _refresh_gap(self) -> None:
        ws = self.dual.xi_tree.weights()
        self._row_gaps = [self._row_gap(i) for i in range(self.n_states)]
        self._gap_num = sum(w * g for w, g in zip(ws, self._row_gaps))
        self._gap_total = self.dual.xi_tree.total()

    def current_gap(self) -> float:
        """G^t for the current occupancy (requires ground truth)."""
        return self._gap_num / self.dual.xi_tree.total()

    # -- one iteration --------------------------------------------------------
    def sample_pair(self) -> tuple[int, int]:
        return self.dual.sample(self._uniform(), self._uniform())

    def step(self) -> tuple[int, int, int, float, float]:
        """Run one iteration; returns the sampled ``(i, a, j, reward, delta)``."""
        t = self.t + 1
        dual = self.dual
        i, a = dual.sample(self._uniform(), self._uniform())
        j, reward = self.oracle.query(i, a)
        mu_ia = dual.xi(i) * dual.pi(i, a)
        delta = dual_increment(self.h, i, a, j, reward, mu_ia, self.config)
        if delta > 0.0:
            raise InvariantError(t, f"dual increment {delta} > 0")
        if self._coef is not None:
            self.gap_sum += self._gap_num / dual.xi_tree.total()
        primal_increment_apply(self.h, i, j, self.config)

        row = dual.pi_trees[i]
        count = t - self._since[i] + 1
        acc = self._acc[i]
        scale = count / row.total()
        for b, u in enumerate(row.weights()):
            acc[b] += scale * u
        self._since[i] = t + 1

        if self._coef is None:
            dual.apply(i, a, delta)
        else:
            tree = dual.xi_tree
            old = tree.weight(i) * self._row_gaps[i]
            before = tree.total()
            dual.apply(i, a, delta)
            # the numerator is maintained by differences, so its absolute error is
            # relative to the total at the last refresh; recompute once that halves
            if tree.total() > before or tree.total() < 0.5 * self._gap_total:
                self._refresh_gap()
            else:
                g = self._row_gap(i)
                self._row_gaps[i] = g
                self._gap_num += tree.weight(i) * g - old
        self.t = t
        return i, a, j, reward, delta

    # -- views ----------------------------------------------------------------
    def average_policy(self) -> np.ndarray:
        """Mean of pi^1..pi^t over the iterations run so far (the uniform start if none)."""
        t = max(self.t, 1)
        acc = np.array(self._acc)
        for i, row in enumerate(self.dual.pi_trees):
            count = t - self._since[i] + 1
            if count > 0:
                acc[i] += count * np.array(row.weights()) / row.total()
        return acc / t

    def check_invariants(self) -> None:
        t = self.t
        cap = 2.0 * self.config.t_mix
        hmax = max(abs(x) for x in self.h)
        if hmax > cap:
            raise InvariantError(t, f"||h||_inf = {hmax} exceeds {cap}")
        ws = self.dual.xi_tree.weights()
        total = self.dual.xi_tree.total()
        if abs(sum(ws) / total - 1.0) > 1e-9:
            raise InvariantError(t, f"xi sums to {sum(ws) / total}")
        if min(ws) / total < self.lower * (1.0 - 1e-12):
            raise InvariantError(t, f"xi below floor {self.lower}")
        for i, row in enumerate(self.dual.pi_trees):
            us = row.weights()
            if min(us) < 0.0 or abs(sum(us) / row.total() - 1.0) > 1e-9:
                raise InvariantError(t, f"pi row {i} not a distribution")

    def checkpoint_values(self) -> tuple[float, float]:
        """(G^t, E^t) for the current iterate; requires ground truth."""
        truth = self.truth
        mu = self.dual.mu_matrix()
        h = np.array(self.h)
        E = (kl_divergence(truth.mu_star, mu)
             + float(np.sum((h - truth.h_star) ** 2))
             / (2 * self.n_states * self.config.t_mix ** 2))
        return self.current_gap(), E


@dataclass
class LearnResult:
    policy: np.ndarray
    diagnostics: GapDiagnostics
    queries: int
    learner: PiLearner

    @property
    def mean_gap(self) -> float:
        """(1/T) sum_t G^t over the whole run (nan without ground truth)."""
        if self.learner.truth is None:
            return float("nan")
        return self.learner.gap_sum / self.learner.t


def make_learner(source, config: LearnerConfig, truth: GroundTruth | None = None) -> PiLearner:
    """Seeded learner over a model (oracle built here) or an existing oracle."""
    learner_seed, oracle_seed = np.random.SeedSequence(config.seed).spawn(2)
    if isinstance(source, MdpModel):
        oracle = SamplingOracle(source, oracle_seed)
    elif isinstance(source, SamplingOracle):
        oracle = source
    else:
        raise TypeError("source must be an MdpModel or a SamplingOracle")
    return PiLearner(oracle, config, np.random.default_rng(learner_seed), truth)


def run(source, config: LearnerConfig, ground_truth: GroundTruth | None = None, *,
        check_invariants: bool = False, checkpoints=None, callback=None) -> LearnResult:
    """Run T iterations; returns the averaged policy, checkpoint diagnostics and query count.

    ``callback(learner, (i, a, j, reward, delta))`` is invoked after every
    iteration when given.
    """
    learner = make_learner(source, config, ground_truth)
    oracle = learner.oracle
    model = oracle.model
    T = config.T
    marks = sorted(set(checkpoint_schedule(T) if checkpoints is None else checkpoints))
    diag = GapDiagnostics()
    queries0 = oracle.query_count
    nan = float("nan")
    step = learner.step
    start = time.perf_counter_ns()

    t = 0
    for mark in marks:
        if mark > T:
            break
        for _ in range(mark - 1 - t):
            sample = step()
            if check_invariants:
                learner.check_invariants()
            if callback is not None:
                callback(learner, sample)
        gap, E = learner.checkpoint_values() if ground_truth is not None else (nan, nan)
        sample = step()
        if check_invariants:
            learner.check_invariants()
        if callback is not None:
            callback(learner, sample)
        t = mark
        if ground_truth is not None:
            vbar = average_reward(model, learner.average_policy())
            mean_gap = learner.gap_sum / t
        else:
            vbar = mean_gap = nan
        diag.t.append(t)
        diag.gap.append(gap)
        diag.mean_gap.append(mean_gap)
        diag.E.append(E)
        diag.vbar_hat.append(vbar)
        diag.queries.append(oracle.query_count - queries0)
        diag.elapsed_ns.append(time.perf_counter_ns() - start)
    for _ in range(T - t):
        sample = step()
        if check_invariants:
            learner.check_invariants()
        if callback is not None:
            callback(learner, sample)

    return LearnResult(policy=learner.average_policy(), diagnostics=diag,
                       queries=oracle.query_count - queries0, learner=learner)
