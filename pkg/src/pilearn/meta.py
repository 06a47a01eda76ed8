"""Policy evaluation by trajectory averaging and the K-trial boosting wrapper."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate

import numpy as np

from .learner import LearnerConfig, run
from .mdp import MdpModel, validate_policy
from .sampling import SamplingOracle

INITIAL_STATE = 0


@dataclass(frozen=True)
class EvaluationResult:
    estimate: float
    trajectory_length: int
    seed: int | None
    queries: int


def trajectory_length(t_mix: float, epsilon: float, delta: float, multiplier: float = 1.0) -> int:
    """``L = ceil(multiplier * (t_mix / eps^2) * log(1 / delta))``, at least one step."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return max(1, math.ceil(multiplier * t_mix / epsilon ** 2 * math.log(1.0 / delta) - 1e-9))


def _as_oracle(source, seed) -> SamplingOracle:
    if isinstance(source, MdpModel):
        return SamplingOracle(source, seed)
    if isinstance(source, SamplingOracle):
        return source.fork(seed)
    raise TypeError("source must be an MdpModel or a SamplingOracle")


def evaluate_policy(source, policy, epsilon: float, delta: float, t_mix: float, seed=None,
                    multiplier: float = 1.0) -> EvaluationResult:
    """Mean reward along one trajectory of ``L`` oracle transitions from state 0.

    Action draws and transitions use independent streams derived from
    ``seed``; an oracle passed in is forked, so its own stream is untouched.
    """
    oracle_seed, action_seed = np.random.SeedSequence(seed).spawn(2)
    oracle = _as_oracle(source, oracle_seed)
    model = oracle.model
    pi = validate_policy(policy, model.n_states, model.n_actions, tol=1e-9)
    L = trajectory_length(t_mix, epsilon, delta, multiplier)

    cdfs = [list(accumulate(row)) for row in pi.tolist()]
    last = [max(k for k, p in enumerate(row) if p > 0) for row in pi.tolist()]
    u = np.random.default_rng(action_seed).random(L).tolist()
    query = oracle.query
    state = INITIAL_STATE
    total = 0.0
    for step in range(L):
        cdf = cdfs[state]
        a = bisect_right(cdf, u[step] * cdf[-1])
        if a > last[state]:
            a = last[state]
        state, reward = query(state, a)
        total += reward
    return EvaluationResult(estimate=total / L, trajectory_length=L, seed=seed,
                            queries=oracle.query_count)


@dataclass(frozen=True)
class BoostConfig:
    epsilon: float
    delta: float
    t_mix: float
    tau: float
    K: int | None = None
    T: int | None = None
    multiplier: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.K is not None and self.K < 1:
            raise ValueError("K must be a positive integer")

    @property
    def trials(self) -> int:
        if self.K is not None:
            return self.K
        return max(1, math.ceil(math.log(2.0 / self.delta) / math.log(3.0) - 1e-12))

    def learner_config(self, n_states: int, n_actions: int, seed) -> LearnerConfig:
        return LearnerConfig.default(n_states, n_actions, self.t_mix, self.tau,
                                     self.epsilon / 3.0, seed=seed, T=self.T)

    def trajectory_length(self) -> int:
        return trajectory_length(self.t_mix, self.epsilon / 3.0, self.delta / (2 * self.trials),
                                 self.multiplier)


@dataclass
class TrialRecord:
    index: int
    learner_seed: int
    eval_seed: int
    T: int
    learn_queries: int
    estimate: float
    eval_queries: int
    policy: np.ndarray = field(repr=False)


@dataclass
class BoostAudit:
    trials: list[TrialRecord]
    selected: int
    trajectory_length: int

    @property
    def total_queries(self) -> int:
        return sum(r.learn_queries + r.eval_queries for r in self.trials)

    def report(self) -> str:
        lines = [f"trials {len(self.trials)}",
                 f"trajectory_length {self.trajectory_length}",
                 "k learner_seed eval_seed T learn_queries estimate eval_queries"]
        for r in self.trials:
            lines.append(f"{r.index} {r.learner_seed} {r.eval_seed} {r.T} {r.learn_queries} "
                         f"{r.estimate:.17g} {r.eval_queries}")
        lines.append(f"selected {self.selected}")
        lines.append(f"total_queries {self.total_queries}")
        return "\n".join(lines) + "\n"


def boost(source, config: BoostConfig) -> tuple[np.ndarray, BoostAudit]:
    """Run K independent learners at eps/3, score each by one evaluation, keep the best.

    Ties in the estimates go to the lowest trial index.
    """
    base = source if isinstance(source, SamplingOracle) else SamplingOracle(source)
    model = base.model
    K = config.trials
    seeds = np.random.SeedSequence(config.seed).generate_state(2 * K).tolist()
    eval_delta = config.delta / (2 * K)
    records = []
    for k in range(K):
        learner_seed, eval_seed = seeds[k], seeds[K + k]
        lcfg = config.learner_config(model.n_states, model.n_actions, learner_seed)
        result = run(base.fork(learner_seed), lcfg)
        ev = evaluate_policy(base, result.policy, config.epsilon / 3.0, eval_delta, config.t_mix,
                             seed=eval_seed, multiplier=config.multiplier)
        records.append(TrialRecord(k, learner_seed, eval_seed, lcfg.T, result.queries,
                                   ev.estimate, ev.queries, result.policy))
    selected = max(range(K), key=lambda k: (records[k].estimate, -k))
    audit = BoostAudit(records, selected, config.trajectory_length())
    return records[selected].policy, audit
