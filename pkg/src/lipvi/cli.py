"""Command-line surface.

Exit codes: 0 ok, 1 usage, 2 data or I/O error, 3 slope budget exhausted
(diagnosis never passed), 4 diagnosis rejected.  LIPVI_THREADS caps internal
parallelism (0 or unset picks a small automatic cap).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import io as lio
from .baseline_is import hoeffding_lower, is_estimate
from .errors import EtaExhausted, LipviError
from .lipnorm import (estimate_reward_lipschitz, estimate_transition_lipschitz,
                      propagate, state_metric)
from .lvi import LviConfig, run
from .mdp import (Environment, GaussianLinearPolicy, ConstantPolicy, Policy,
                  SwingUpPolicy, collect, draw_init_points,
                  ground_truth_return, make_env)
from .bellman import freeze
from .metric import EuclideanMetric, FeatureTableMetric, Metric, WeightedEuclideanMetric
from .oracle import lp_bound

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ETA = 3
EXIT_REJECT = 4

_ENVS = ("synthetic", "pendulum")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_policy(spec: str) -> Policy:
    kind, _, rest = spec.partition(":")
    vals = [float(v) for v in rest.split(",")] if rest else []
    if kind == "gaussian-linear":
        if len(vals) != 3:
            raise UsageError("gaussian-linear policy takes gain,bias,sigma")
        return GaussianLinearPolicy(*vals)
    if kind == "constant":
        if not vals:
            raise UsageError("constant policy takes at least one action value")
        return ConstantPolicy(tuple(vals))
    if kind == "swingup":
        return SwingUpPolicy(vals[0] if vals else 0.0)
    raise UsageError(
        f"unknown policy {spec!r}; valid: gaussian-linear:g,b,s constant:v,... swingup:sigma"
    )


def parse_metric(spec: str, dataset=None) -> Metric:
    kind, _, rest = spec.partition(":")
    if kind == "euclidean":
        return EuclideanMetric()
    if kind == "weighted":
        return WeightedEuclideanMetric(tuple(float(v) for v in rest.split(",")))
    if kind in ("feature", "feature-nofallback"):
        if dataset is None:
            raise UsageError("feature metrics need a dataset to anchor the table")
        rows, feats = lio.read_feature_table(rest)
        if rows.max(initial=-1) >= dataset.n or rows.min(initial=0) < 0:
            raise LipviError("feature table row indices fall outside the dataset")
        return FeatureTableMetric(dataset.x()[rows], feats,
                                  fallback=(kind == "feature"))
    raise UsageError(
        f"unknown metric {spec!r}; valid: euclidean weighted:w0,... feature:file"
    )


def _check_env_name(name: str) -> str:
    if name not in _ENVS:
        raise UsageError(f"unknown environment {name!r}; valid: {', '.join(_ENVS)}")
    return name


def _behavior_for(env: Environment, sigma: float | None) -> Policy:
    if sigma is None:
        return env.default_behavior()
    return env.default_behavior(sigma)


def _resolve(flag_value, file_cfg: dict, key: str, default, cast):
    if flag_value is not None:
        return flag_value
    if key in file_cfg:
        return cast(file_cfg[key])
    return default


def _auto_eta(dataset, metric, gamma: float, seed: int) -> float:
    reward_slope = estimate_reward_lipschitz(dataset, metric, seed=seed)
    transition_slope = estimate_transition_lipschitz(
        dataset, metric, state_metric(metric, dataset.state_dim), seed=seed)
    eta = propagate(reward_slope, transition_slope, gamma, metric=metric)
    if eta <= 0:
        raise LipviError("auto eta came out non-positive; pass --eta explicitly")
    return eta


def build_parser() -> _Parser:
    parser = _Parser(prog="lipvi", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="roll a behavior policy and write a dataset CSV")
    p.add_argument("--env", required=True)
    p.add_argument("--trajectories", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.95,
                   help="discount baked into the synthetic reward")
    p.add_argument("--behavior-sigma", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bounds", help="compute interval bounds and write a report JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--eta", default=None, help="positive float or 'auto'")
    p.add_argument("--subsample", type=int, default=None, help="0 = full-sample updates")
    p.add_argument("--action-samples", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--init-count", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--escalation-factor", type=float, default=None)
    p.add_argument("--max-escalations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--env", default=None,
                   help="environment supplying default policy and initial states")
    p.add_argument("--policy", default=None)
    p.add_argument("--metric", default=None)
    p.add_argument("--init-csv", default=None,
                   help="CSV of initial state-action points; overrides --env sampling")
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run a seeded sweep and write plot-ready CSV")
    p.add_argument("--env", required=True)
    p.add_argument("--axis", required=True, choices=("trajectories", "subsample"))
    p.add_argument("--values", required=True,
                   help="comma list; the subsample axis also accepts 'full'")
    p.add_argument("--seeds", type=int, required=True)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--eta", default="2.0")
    p.add_argument("--trajectories", type=int, default=30)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--subsample", type=int, default=500)
    p.add_argument("--action-samples", type=int, default=128)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--init-count", type=int, default=100)
    p.add_argument("--behavior-sigma", type=float, default=None)
    p.add_argument("--truth-rollouts", type=int, default=2000)
    p.add_argument("--truth-horizon", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate-lipschitz", help="pair-scan slope estimates as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--metric", default="euclidean")
    p.add_argument("--row-cap", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("diagnose", help="run both chains once and report pass/reject")
    p.add_argument("--data", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--env", default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--metric", default="euclidean")
    p.add_argument("--action-samples", type=int, default=128)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--init-count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("oracle", help="dense-LP reference bounds for tiny instances")
    p.add_argument("--data", required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--env", default=None)
    p.add_argument("--policy", default=None)
    p.add_argument("--metric", default="euclidean")
    p.add_argument("--action-samples", type=int, default=1)
    p.add_argument("--init-csv", default=None, help="defaults to the dataset anchors")
    p.add_argument("--direction", choices=("upper", "lower", "both"), default="both")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _target_policy(args, env: Environment | None) -> Policy:
    if getattr(args, "policy", None):
        return parse_policy(args.policy)
    if env is not None:
        return env.default_target()
    raise UsageError("pass --policy or --env to fix the target policy")


def cmd_collect(args) -> int:
    env = make_env(_check_env_name(args.env), gamma=args.gamma)
    behavior = _behavior_for(env, args.behavior_sigma)
    dataset = collect(env, behavior, args.trajectories, args.horizon, seed=args.seed)
    lio.write_dataset(dataset, args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    file_cfg = lio.read_config_file(args.config) if args.config else {}
    gamma = _resolve(args.gamma, file_cfg, "gamma", 0.95, float)
    eta_spec = _resolve(args.eta, file_cfg, "eta", "auto", str)
    seed = _resolve(args.seed, file_cfg, "seed", 0, int)
    env_name = _resolve(args.env, file_cfg, "env", "synthetic", str)
    cfg = LviConfig(
        gamma=gamma,
        eta=1.0,  # replaced below once eta resolves
        max_iters=_resolve(args.iterations, file_cfg, "iterations", 100, int),
        tol=_resolve(args.tol, file_cfg, "tol", None, float),
        subsample_size=_resolve(args.subsample, file_cfg, "subsample", 0, int),
        action_samples=_resolve(args.action_samples, file_cfg, "action_samples", 128, int),
        init_count=_resolve(args.init_count, file_cfg, "init_count", 100, int),
        escalation_factor=_resolve(args.escalation_factor, file_cfg,
                                   "escalation_factor", 1.1, float),
        max_escalations=_resolve(args.max_escalations, file_cfg, "max_escalations", 20, int),
        seed=seed,
    )
    dataset = lio.read_dataset(args.data)
    metric = parse_metric(_resolve(args.metric, file_cfg, "metric", "euclidean", str), dataset)
    env = make_env(_check_env_name(env_name), gamma=gamma)
    target = (parse_policy(file_cfg["policy"]) if args.policy is None and "policy" in file_cfg
              else _target_policy(args, env))
    if eta_spec == "auto":
        eta = _auto_eta(dataset, metric, gamma, seed)
    else:
        eta = float(eta_spec)
        if eta <= 0:
            raise UsageError("--eta must be positive or 'auto'")
    cfg = LviConfig(**{**cfg.__dict__, "eta": eta})
    init_csv = _resolve(args.init_csv, file_cfg, "init_csv", None, str)
    if init_csv:
        init_points = lio.read_points(init_csv)
    else:
        init_points = draw_init_points(env, target, cfg.init_count, seed=seed)
    try:
        report = run(dataset, target, cfg, init_points, metric=metric)
    except EtaExhausted as exc:
        lio.write_report(exc.report, args.out)
        print(f"eta exhausted after {exc.report.escalations} escalations "
              f"(final eta {lio.format_real(exc.report.eta_used)})", file=sys.stderr)
        return EXIT_ETA
    lio.write_report(report, args.out)
    iters = max(report.iterations_upper, report.iterations_lower)
    print(f"{lio.format_real(report.lower)} {lio.format_real(report.upper)} "
          f"{lio.format_real(report.eta_used)} {iters}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    env = make_env(_check_env_name(args.env), gamma=args.gamma)
    target = env.default_target()
    behavior = _behavior_for(env, args.behavior_sigma)
    truth = ground_truth_return(env, target, None, args.gamma,
                                args.truth_rollouts, args.truth_horizon,
                                seed=args.seed).value
    tokens = [v.strip() for v in args.values.split(",") if v.strip()]
    lines = ["axis,value,seed,lower,upper,truth,gap,relative_gap,eta,runtime_ms"]
    run_index = 0
    for token in tokens:
        if args.axis == "subsample":
            if token != "full" and int(token) < 1:
                raise UsageError("subsample values must be positive or 'full'")
        else:
            if int(token) < 1:
                raise UsageError("trajectory counts must be positive")
        for seed_i in range(args.seeds):
            run_seed = args.seed + 1 + run_index
            run_index += 1
            n_t = int(token) if args.axis == "trajectories" else args.trajectories
            subsample = (args.subsample if args.axis == "trajectories"
                         else (0 if token == "full" else int(token)))
            dataset = collect(env, behavior, n_t, args.horizon, seed=run_seed)
            metric = EuclideanMetric()
            eta = (_auto_eta(dataset, metric, args.gamma, run_seed)
                   if args.eta == "auto" else float(args.eta))
            cfg = LviConfig(gamma=args.gamma, eta=eta, max_iters=args.iterations,
                            subsample_size=subsample, action_samples=args.action_samples,
                            init_count=args.init_count, seed=run_seed)
            init_points = draw_init_points(env, target, cfg.init_count, seed=run_seed)
            start = time.perf_counter()
            try:
                report = run(dataset, target, cfg, init_points, metric=metric)
            except EtaExhausted as exc:
                report = exc.report
            runtime_ms = (time.perf_counter() - start) * 1e3
            gap = report.upper - report.lower
            lines.append(",".join([
                args.axis, token, str(seed_i),
                lio.format_real(report.lower), lio.format_real(report.upper),
                lio.format_real(truth), lio.format_real(gap),
                lio.format_real(gap / truth), lio.format_real(report.eta_used),
                lio.format_real(runtime_ms),
            ]))
    lio.atomic_write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_estimate_lipschitz(args) -> int:
    dataset = lio.read_dataset(args.data)
    metric = parse_metric(args.metric, dataset)
    cap = args.row_cap if args.row_cap > 0 else None
    reward_slope = estimate_reward_lipschitz(dataset, metric, row_cap=cap, seed=args.seed)
    out = {
        "reward_lipschitz": reward_slope,
        "row_cap": cap,
        "rows": dataset.n,
        "separable": metric.separable,
        "constant_policy_assumption": True,
    }
    try:
        transition_slope = estimate_transition_lipschitz(
            dataset, metric, state_metric(metric, dataset.state_dim),
            row_cap=cap, seed=args.seed)
        out["transition_lipschitz"] = transition_slope
        out["eta"] = propagate(reward_slope, transition_slope, args.gamma, metric=metric)
        out["propagate_error"] = None
    except LipviError as exc:
        out.setdefault("transition_lipschitz", None)
        out["eta"] = None
        out["propagate_error"] = str(exc)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    dataset = lio.read_dataset(args.data)
    metric = parse_metric(args.metric, dataset)
    env = make_env(_check_env_name(args.env), gamma=args.gamma) if args.env else None
    target = parse_policy(args.policy) if args.policy else _target_policy(args, env)
    cfg = LviConfig(gamma=args.gamma, eta=args.eta, max_iters=args.iterations,
                    action_samples=args.action_samples, init_count=args.init_count,
                    max_escalations=0, seed=args.seed)
    if env is not None:
        init_points = draw_init_points(env, target, cfg.init_count, seed=args.seed)
    else:
        init_points = dataset.x()
    try:
        report = run(dataset, target, cfg, init_points, metric=metric)
    except EtaExhausted as exc:
        print(json.dumps({"diagnosis": "reject", "eta": args.eta,
                          "iterations": max(exc.report.iterations_upper,
                                            exc.report.iterations_lower)},
                         sort_keys=True))
        return EXIT_REJECT
    print(json.dumps({"diagnosis": "pass", "eta": args.eta,
                      "lower": report.lower, "upper": report.upper},
                     sort_keys=True))
    return EXIT_OK


def cmd_oracle(args) -> int:
    dataset = lio.read_dataset(args.data)
    metric = parse_metric(args.metric, dataset)
    env = make_env(_check_env_name(args.env), gamma=args.gamma) if args.env else None
    target = parse_policy(args.policy) if args.policy else _target_policy(args, env)
    fb = freeze(dataset, target, args.action_samples, args.gamma, seed=args.seed)
    init_points = lio.read_points(args.init_csv) if args.init_csv else dataset.x()
    out = {"eta": args.eta, "gamma": args.gamma}
    for direction in ("upper", "lower"):
        if args.direction in (direction, "both"):
            out[direction] = lp_bound(fb, fb.anchors, init_points, args.eta,
                                      metric, direction)
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "collect": cmd_collect,
    "bounds": cmd_bounds,
    "sweep": cmd_sweep,
    "estimate-lipschitz": cmd_estimate_lipschitz,
    "diagnose": cmd_diagnose,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lipvi: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EtaExhausted as exc:
        print(f"lipvi: {exc}", file=sys.stderr)
        return EXIT_ETA
    except (LipviError, OSError, ValueError) as exc:
        print(f"lipvi: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
