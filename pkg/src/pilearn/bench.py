"""Sweep records and the run-time scaling experiment."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .learner import LearnerConfig, run
from .mdp import generate_random_ergodic
from .sampling import SamplingOracle, build_tables


@dataclass
class SweepRecord:
    instance: str
    n_states: int
    n_actions: int
    tau: float
    t_mix: float
    T: int
    seed: int
    final_gap: float
    vbar_hat: float
    vbar_star: float
    queries: int
    total_ns: int
    per_iter_ns: float
    prep_ns: int = 0


def write_records(records, path) -> None:
    names = [f.name for f in fields(SweepRecord)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
        writer.writeheader()
        for rec in records:
            row = asdict(rec)
            for key, value in row.items():
                if isinstance(value, float):
                    row[key] = format(value, ".17g")
            writer.writerow(row)


def read_records(path) -> list[SweepRecord]:
    types = {f.name: f.type for f in fields(SweepRecord)}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            conv = {}
            for key, value in row.items():
                kind = types[key]
                conv[key] = value if kind == "str" else (int(value) if kind == "int" else float(value))
            out.append(SweepRecord(**conv))
    return out


def time_preprocessing(model, reps: int = 5) -> int:
    """Median wall time (ns) of building the oracle's sampling tables."""
    samples = []
    for _ in range(reps):
        start = time.perf_counter_ns()
        build_tables(model)
        samples.append(time.perf_counter_ns() - start)
    return int(statistics.median(samples))


def scaling_sweep(sizes, n_actions: int = 2, smoothing: float = 0.5, T: int = 1 << 14,
                  seeds=(0,), reps: int = 5, tau: float = 2.0, t_mix: float = 1.0,
                  progress=None) -> list[SweepRecord]:
    """Per-iteration and preprocessing times on random instances of growing size.

    Each (size, seed) gets its own instance; times are medians over ``reps``
    repetitions, and the per-iteration time excludes learner setup.
    """
    records = []
    nan = float("nan")
    for S in sizes:
        for seed in seeds:
            model = generate_random_ergodic(S, n_actions, smoothing, seed)
            prep = time_preprocessing(model, reps)
            oracle = SamplingOracle(model)
            cfg = LearnerConfig.default(S, n_actions, t_mix, tau, 1.0, seed=seed, T=T)
            loop_ns = []
            queries = 0
            for rep in range(reps):
                result = run(oracle.fork([seed, rep]), cfg, checkpoints=[T])
                loop_ns.append(result.diagnostics.elapsed_ns[-1])
                queries = result.queries
            total = int(statistics.median(loop_ns))
            rec = SweepRecord(f"random-s{S}-a{n_actions}-seed{seed}", S, n_actions, tau, t_mix,
                              T, seed, nan, nan, nan, queries, total, total / T, prep)
            records.append(rec)
            if progress is not None:
                progress(rec)
            del model, oracle
    return records


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
