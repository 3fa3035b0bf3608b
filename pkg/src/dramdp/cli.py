"""Command-line entry point: gen, diagnose, solve, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .amdp import Method, anchored_amdp, delta_bound, reduce_to_dmdp
from .duals import UncertaintySet, worst_case
from .errors import ConfigError, DramdpError, TooManyPolicies
from .ergodicity import diagnose_kernel, model_minorization_time
from .experiment import ExperimentConfig, cached_ground_truth, emit_outputs, fits_by_algorithm, run_experiment
from .instances import hard_mdp, random_mdp
from .model import MdpModel, induced_kernel, min_support_probability, sample_transitions

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("dramdp")


def _uset(args) -> UncertaintySet:
    if args.divergence == "kl":
        return UncertaintySet.kl(args.delta)
    return UncertaintySet.fk(args.delta, args.k)


def cmd_gen(args) -> int:
    if args.family == "hard":
        model = hard_mdp(args.p)
    else:
        model = random_mdp(args.states, args.actions, args.seed, args.sigma_max)
    text = json.dumps(model.to_dict()) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_diagnose(args) -> int:
    model = MdpModel.load(args.model)
    policies = None
    if args.policy_file:
        policies = [np.asarray(p, dtype=np.int64) for p in json.loads(Path(args.policy_file).read_text())]
    try:
        mm = model_minorization_time(model, args.m_max, policies)
    except TooManyPolicies:
        rng = np.random.default_rng(args.seed)
        policies = [rng.integers(0, model.n_actions, model.n_states) for _ in range(args.policy_samples)]
        mm = model_minorization_time(model, args.m_max, policies)
    report = diagnose_kernel(induced_kernel(model, mm.worst_policy), args.m_max)
    out = {"model": mm.to_dict(), "worst_policy_report": report.to_dict(),
           "p_min": min_support_probability(model)}
    if args.delta is not None:
        uset = _uset(args)
        bound = delta_bound(out["p_min"], mm.m_vee, uset)
        out["adversarial_power"] = {"m_vee": mm.m_vee, "p_min": out["p_min"], "delta_max": bound,
                                    "satisfied": uset.radius <= bound, "approximate": mm.approximate}
    print(json.dumps(out, indent=2))
    return 0


def cmd_solve(args) -> int:
    model = MdpModel.load(args.model)
    uset = _uset(args)
    if args.exact:
        kernel, n = model.kernel, args.n
    else:
        emp = sample_transitions(model, args.n, args.seed)
        kernel, n = emp.probs, emp.n
    if Method(args.algorithm) is Method.REDUCTION:
        sol = reduce_to_dmdp(kernel, model.reward, uset, n, tol=args.tol)
    else:
        sol = anchored_amdp(kernel, model.reward, uset, n, anchor_state=args.anchor, tol=args.tol)
    print(json.dumps(sol.to_dict(), indent=2))
    if args.dump_duals:
        if uset.radius == 0:
            raise ConfigError("--dump-duals needs delta > 0")
        dump = [
            {"state": s, "action": a, **worst_case(kernel[s, a], sol.bias, uset).to_dict()}
            for s in range(model.n_states) for a in range(model.n_actions)
        ]
        Path(args.dump_duals).write_text(json.dumps(dump, indent=1) + "\n", encoding="utf-8")
    return 0


def load_config_file(path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


OVERRIDES = ["family", "p", "states", "actions", "instance_seed", "sigma_max", "divergence", "delta", "k",
             "algorithm", "n_grid", "seeds", "seed", "gt_precision", "out_dir"]


def cmd_experiment(args) -> int:
    cfg = load_config_file(args.config) if args.config else {}
    for key in OVERRIDES:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.no_plot:
        cfg["plot"] = False
    if args.no_timing:
        cfg["record_timing"] = False
    config = ExperimentConfig.from_mapping(cfg)
    cache = Path(config.out_dir) / "ground_truth_cache.json"
    gt = cached_ground_truth(config.build_model(), config.uncertainty_set(), config.gt_precision, cache)
    records = run_experiment(config, ground_truth=gt)
    fits = fits_by_algorithm(records)
    paths = emit_outputs(records, fits, config, ground_truth=gt)
    for alg, fit in fits.items():
        print(f"{alg}: slope={fit.slope:.4f} intercept={fit.intercept:.4f} r2={fit.r_squared:.4f} points={fit.points}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 2 if any(r.failed for r in records) else 0


def _n_grid(text: str) -> list[int]:
    return [int(round(float(x))) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dramdp", description="Distributionally robust average-reward MDP tools")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def divergence_flags(p, default_delta=None):
        p.add_argument("--divergence", choices=["kl", "fk"], default=None if default_delta is None else "kl")
        p.add_argument("--delta", type=float, default=default_delta)
        p.add_argument("--k", type=float, default=None if default_delta is None else 2.0)

    g = sub.add_parser("gen", help="write an instance as MdpModel JSON")
    g.add_argument("--family", choices=["hard", "random"], default="hard")
    g.add_argument("--p", type=float, default=0.25)
    g.add_argument("--states", type=int, default=20)
    g.add_argument("--actions", type=int, default=30)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sigma-max", type=float, default=100.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    d = sub.add_parser("diagnose", help="ergodicity report for a model file")
    d.add_argument("model")
    d.add_argument("--m-max", type=int, default=4096)
    d.add_argument("--policy-file", help="JSON list of policies to scan when full enumeration is too large")
    d.add_argument("--policy-samples", type=int, default=1000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--divergence", choices=["kl", "fk"], default="kl")
    d.add_argument("--delta", type=float, default=None)
    d.add_argument("--k", type=float, default=2.0)
    d.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("solve", help="run one algorithm on sampled (or exact) transitions")
    s.add_argument("model")
    divergence_flags(s, default_delta=0.01)
    s.add_argument("--algorithm", choices=["reduction", "anchored"], default="anchored")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--exact", action="store_true", help="use the nominal kernel instead of samples")
    s.add_argument("--anchor", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--dump-duals", metavar="PATH", help="write worst-case dual solutions at the result")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="convergence-rate sweep over sample sizes")
    e.add_argument("--config", help="TOML or JSON file with ExperimentConfig fields")
    e.add_argument("--family", choices=["hard", "random"])
    e.add_argument("--p", type=float)
    e.add_argument("--states", type=int)
    e.add_argument("--actions", type=int)
    e.add_argument("--instance-seed", type=int)
    e.add_argument("--sigma-max", type=float)
    divergence_flags(e)
    e.add_argument("--algorithm", choices=["reduction", "anchored", "both"])
    e.add_argument("--n-grid", type=_n_grid, help="comma-separated sample sizes, e.g. 100,316,1000")
    e.add_argument("--seeds", type=int, help="replicates per sample size")
    e.add_argument("--seed", type=int)
    e.add_argument("--gt-precision", type=float)
    e.add_argument("--out-dir")
    e.add_argument("--no-plot", action="store_true")
    e.add_argument("--no-timing", action="store_true", help="write 0 for wall_time_ms (byte-reproducible CSV)")
    e.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    except (DramdpError, ValueError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
