"""Command-line driver: gen, solve, learn, boost, eval, verify, scaling.

Exit status is 0 on success, 1 on a validation or acceptance failure and 2
on unreadable or malformed input files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench, exact, learner, meta, mdp
from .sampling import SamplingOracle

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAIL):
        super().__init__(message)
        self.code = code


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"0,1,5"`` or an inclusive range ``"0-44"`` (mixable)."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if part[0] != "-" else (part, "")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError(f"no seeds in {text!r}")
    return seeds


def parse_sizes(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _seeds(args) -> list[int]:
    if args.seeds is not None:
        return args.seeds
    return [args.seed]


def _load_model(path) -> mdp.MdpModel:
    if path is None:
        raise CliError("--instance is required")
    try:
        return mdp.read_model(path)
    except OSError as exc:
        raise CliError(f"cannot read instance: {exc}", EXIT_IO) from None
    except mdp.ParseError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from None


def _load_truth(instance, required: bool = False):
    path = exact.truth_path(instance)
    if not path.exists():
        if required:
            raise CliError(f"missing ground-truth sidecar {path}; run 'solve' first")
        return None
    try:
        return exact.read_truth(path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None


def _constants(args, truth) -> tuple[float, float]:
    tau = args.tau if args.tau is not None else (truth.tau if truth else None)
    t_mix = args.tmix if args.tmix is not None else (truth.t_mix if truth else None)
    missing = [flag for flag, v in (("--tau", tau), ("--tmix", t_mix)) if v is None]
    if missing:
        raise CliError(f"no sidecar value for {' and '.join(missing)}; pass "
                       f"{' and '.join(missing)} explicitly")
    return float(tau), float(t_mix)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    if args.preset == "ring":
        model = mdp.ring_switch(args.states, args.smoothing)
    elif args.preset == "chain":
        model = mdp.two_state_chain()
    else:
        model = mdp.generate_random_ergodic(args.states, args.actions, args.smoothing, args.seed)
    out = Path(args.out or "instance.amdp")
    out.parent.mkdir(parents=True, exist_ok=True)
    mdp.write_model(model, out)
    print(f"wrote {out}")
    try:
        truth = exact.solve_optimal(model, args.budget, method="enumerate")
    except exact.BudgetExceeded:
        print(f"warning: |A|^|S| = {model.n_actions ** model.n_states} exceeds the enumeration "
              f"budget {args.budget}; no ground-truth sidecar written", file=sys.stderr)
        return EXIT_OK
    exact.write_truth(truth, exact.truth_path(out))
    print(f"wrote {exact.truth_path(out)}")
    return EXIT_OK


def cmd_solve(args) -> int:
    model = _load_model(args.instance)
    truth = exact.solve_optimal(model, args.budget)
    path = Path(args.out) if args.out else exact.truth_path(args.instance)
    exact.write_truth(truth, path)
    print(f"v_star {truth.v_star:.17g}")
    print(f"tau {truth.tau if truth.tau is None else format(truth.tau, '.17g')}")
    print(f"t_mix {truth.t_mix}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_learn(args) -> int:
    model = _load_model(args.instance)
    truth = _load_truth(args.instance)
    tau, t_mix = _constants(args, truth)
    out = _out_dir(args)
    S, A = model.n_states, model.n_actions
    records = []
    successes = 0
    for seed in _seeds(args):
        cfg = learner.LearnerConfig.default(S, A, t_mix, tau, args.epsilon, seed=seed, T=args.T)
        result = learner.run(model, cfg, truth)
        diag = result.diagnostics
        diag.to_csv(out / f"learn_s{seed}.csv")
        mdp.write_policy(result.policy, out / f"policy_s{seed}.txt")
        vbar = float(diag.vbar_hat[-1]) if truth else exact.average_reward(model, result.policy)
        vstar = truth.v_star if truth else float("nan")
        ok = truth is not None and vbar >= vstar - args.epsilon
        successes += ok
        total_ns = diag.elapsed_ns[-1]
        records.append(bench.SweepRecord(
            Path(args.instance).name, S, A, tau, t_mix, cfg.T, seed,
            result.mean_gap, vbar, vstar, result.queries, total_ns, total_ns / cfg.T))
        print(f"seed {seed}: T {cfg.T} queries {result.queries} vbar_hat {vbar:.6f}"
              + (f" v_star {vstar:.6f} {'ok' if ok else 'miss'}" if truth else ""))
    bench.write_records(records, out / "learn_summary.csv")
    if truth is not None:
        print(f"within epsilon: {successes}/{len(records)}")
    return EXIT_OK


def cmd_boost(args) -> int:
    model = _load_model(args.instance)
    truth = _load_truth(args.instance)
    tau, t_mix = _constants(args, truth)
    out = _out_dir(args)
    base = SamplingOracle(model)
    successes = 0
    seeds = _seeds(args)
    for seed in seeds:
        cfg = meta.BoostConfig(args.epsilon, args.delta, t_mix, tau, K=args.K, T=args.T,
                               multiplier=args.multiplier, seed=seed)
        policy, audit = meta.boost(base, cfg)
        mdp.write_policy(policy, out / f"policy_s{seed}.txt")
        (out / f"audit_s{seed}.txt").write_text(audit.report(), encoding="utf-8")
        line = f"seed {seed}: K {len(audit.trials)} selected {audit.selected} queries {audit.total_queries}"
        if truth is not None:
            value = exact.average_reward(model, policy)
            ok = value >= truth.v_star - args.epsilon
            successes += ok
            line += f" value {value:.6f} {'ok' if ok else 'miss'}"
        print(line)
    if truth is not None:
        print(f"within epsilon: {successes}/{len(seeds)}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = _load_model(args.instance)
    if args.policy is None:
        raise CliError("--policy is required")
    try:
        policy = mdp.read_policy(args.policy)
    except OSError as exc:
        raise CliError(f"cannot read policy: {exc}", EXIT_IO) from None
    except mdp.ParseError as exc:
        raise CliError(f"{args.policy}: {exc}", EXIT_IO) from None
    truth = _load_truth(args.instance)
    t_mix = args.tmix if args.tmix is not None else (truth.t_mix if truth else None)
    if t_mix is None:
        raise CliError("no sidecar value for --tmix; pass --tmix explicitly")
    for seed in _seeds(args):
        res = meta.evaluate_policy(model, policy, args.epsilon, args.delta, t_mix, seed=seed,
                                   multiplier=args.multiplier)
        print(f"seed {seed}: estimate {res.estimate:.17g} L {res.trajectory_length} "
              f"queries {res.queries}")
    return EXIT_OK


def cmd_verify(args) -> int:
    model = _load_model(args.instance)
    truth = _load_truth(args.instance, required=True)
    failed = []
    for name, value, ok in truth.invariant_report(model):
        print(f"{'PASS' if ok else 'FAIL'} {name} {value:.3e}")
        if not ok:
            failed.append(name)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(10):
        policy = rng.dirichlet(np.ones(model.n_actions), size=model.n_states)
        lhs, rhs = exact.gap_identity_check(model, policy, truth)
        worst = max(worst, abs(lhs - rhs))
    ok = worst <= 1e-9
    print(f"{'PASS' if ok else 'FAIL'} gap_identity {worst:.3e}")
    if not ok:
        failed.append("gap_identity")
    if model.n_actions == 1:
        print("pi_star unique (single action)")
    if failed:
        print("verification failed: " + ", ".join(failed))
        return EXIT_FAIL
    print("verification passed")
    return EXIT_OK


def cmd_scaling(args) -> int:
    out = Path(args.out or "scaling.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    sizes = args.sizes or [2 ** k for k in range(4, 13)]
    tau = 2.0 if args.tau is None else args.tau
    t_mix = 1.0 if args.tmix is None else args.tmix

    def progress(rec):
        print(f"S={rec.n_states} seed={rec.seed} prep_ns={rec.prep_ns} "
              f"per_iter_ns={rec.per_iter_ns:.1f}", flush=True)

    records = bench.scaling_sweep(sizes, args.actions, args.smoothing, args.T or 1 << 14,
                                  _seeds(args), args.reps, tau, t_mix, progress)
    bench.write_records(records, out)
    if len(sizes) > 1:
        work = [r.n_states ** 2 * r.n_actions for r in records]
        print(f"preprocessing exponent vs |S|^2|A|: "
              f"{bench.loglog_slope(work, [r.prep_ns for r in records]):.3f}")
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen, "solve": cmd_solve, "learn": cmd_learn, "boost": cmd_boost,
    "eval": cmd_eval, "verify": cmd_verify, "scaling": cmd_scaling,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--instance", help="instance file")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--seeds", type=parse_seeds, help="e.g. 0-44 or 1,2,3 (overrides --seed)")
    common.add_argument("--epsilon", type=float, default=0.1)
    common.add_argument("--delta", type=float, default=0.1)
    common.add_argument("--tau", type=float)
    common.add_argument("--tmix", type=float)
    common.add_argument("--T", type=int, help="iteration count (default from epsilon)")
    common.add_argument("--smoothing", type=float, default=0.2)
    common.add_argument("--states", type=int, default=2)
    common.add_argument("--actions", type=int, default=2)

    parser = argparse.ArgumentParser(prog="pilearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("gen", parents=[common], help="generate an instance and its sidecar")
    p.add_argument("--preset", choices=["random", "ring", "chain"], default="random")
    p.add_argument("--budget", type=int, default=exact.DEFAULT_ENUMERATION_BUDGET)
    p = sub.add_parser("solve", parents=[common], help="exact ground truth for an instance")
    p.add_argument("--budget", type=int, default=exact.DEFAULT_ENUMERATION_BUDGET)
    sub.add_parser("learn", parents=[common], help="run the learner")
    for name, helptext in (("boost", "boosted learner"), ("eval", "trajectory evaluation")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--multiplier", type=float, default=1.0,
                       help="leading constant of the trajectory length")
        if name == "boost":
            p.add_argument("--K", type=int, help="trial count (default from delta)")
        else:
            p.add_argument("--policy", help="policy file")
    sub.add_parser("verify", parents=[common], help="check sidecar invariants")
    p = sub.add_parser("scaling", parents=[common], help="run-time scaling sweep")
    p.add_argument("--sizes", type=parse_sizes, help="comma-separated state counts")
    p.add_argument("--reps", type=int, default=5)
    p.set_defaults(smoothing=0.5)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (exact.NonErgodicError, mdp.ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
