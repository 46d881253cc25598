"""Command-line entry point: ``avgreward <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .deep import DEEP_KINDS, DeepAgent, DeepAgentConfig
from .envs import make_env
from .errors import AvgRewardError
from .harness import (
    ExperimentConfig,
    aggregate_envelope,
    gap_report,
    load_records,
    run_experiment,
    summarize_tail,
)
from .mdp import load_mdp, save_mdp
from .neural import load_params, save_params
from .records import RunRecord
from .solvers import discounted_value_iteration, relative_value_iteration
from .tabular import AGENT_KINDS, LearningConfig, train_tabular


def _load_mdp_arg(args):
    if args.mdp:
        return load_mdp(args.mdp)
    if args.env:
        return make_env(args.env).to_tabular()[0]
    raise AvgRewardError("one of --mdp or --env is required")


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_solve(args):
    mdp = _load_mdp_arg(args)
    if args.criterion == "discounted":
        sol = discounted_value_iteration(mdp, args.gamma, tol=args.tol)
        _emit({"criterion": "discounted", "gamma": sol.gamma, "values": sol.values.tolist(),
               "policy": sol.policy.actions.tolist(), "residual": sol.residual,
               "iterations": sol.iterations})
    else:
        sol = relative_value_iteration(mdp, ref_state=args.ref_state, tol=args.tol)
        _emit({"criterion": "average", "gain": sol.gain, "bias": sol.bias.tolist(),
               "policy": sol.policy.actions.tolist(), "residual": sol.residual,
               "iterations": sol.iterations})


def cmd_export(args):
    mdp, _ = make_env(args.env).to_tabular()
    save_mdp(mdp, args.out)
    print(f"wrote {mdp.num_states} states x {mdp.num_actions} actions to {args.out}")


def cmd_train(args):
    overrides = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    env = make_env(args.env)
    if args.agent in AGENT_KINDS:
        if args.ref_state is not None:
            overrides["ref_state"] = args.ref_state
        record = train_tabular(args.agent, env, LearningConfig(**overrides))
    else:
        if args.ref_state is not None:
            _, indexer = env.to_tabular()
            overrides["ref_features"] = env.encode(indexer.state(args.ref_state)).tolist()
        config = DeepAgentConfig.from_dict(overrides)
        agent = DeepAgent(args.agent, env.feature_dim, env.num_actions, config)
        if args.load_params:
            agent.online = load_params(args.load_params)
            agent.sync()
        record = agent.run(env)
        if args.save_params:
            save_params(agent.online, args.save_params)
    record.to_csv(args.out)
    last = record.eval_avg_reward[-1] if len(record) else float("nan")
    print(f"{args.agent}: {len(record)} evaluations, final eval_avg_reward={last:.6g} -> {args.out}")


def cmd_run(args):
    config = ExperimentConfig.from_json(args.config)
    if args.out_dir:
        config.out_dir = args.out_dir
    if config.out_dir is None:
        config.out_dir = str(Path(args.config).with_suffix(""))
    records = run_experiment(config)
    failed = [r for r in records if r.error is not None]
    print(f"{len(records)} cells, {len(failed)} failed; manifest in {config.out_dir}")
    return 1 if failed else 0


def cmd_aggregate(args):
    records = load_records(args.dir)
    by_agent = {}
    for rec in records:
        by_agent.setdefault(rec.agent, []).append(rec)
    summary = {}
    for agent, recs in sorted(by_agent.items()):
        env = aggregate_envelope(recs)
        path = Path(args.dir) / f"envelope-{agent}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "mean", "min", "max"])
            for row in env.rows():
                writer.writerow([row[0]] + [repr(v) for v in row[1:]])
        summary[agent] = {"runs": len(recs), "final_mean": float(env.mean[-1]),
                          "final_min": float(env.min[-1]), "final_max": float(env.max[-1]),
                          "final_width": float(env.width[-1]), "envelope_csv": path.name}
    _emit(summary)


def cmd_summarize(args):
    mean, std = summarize_tail(RunRecord.from_csv(args.csv), args.tail)
    _emit({"tail": args.tail, "mean": mean, "std": std})


def cmd_gap(args):
    mdp = _load_mdp_arg(args)
    gammas = [float(g) for g in args.gammas.split(",")]
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["gamma", "policy", "average_reward", "optimal_gain", "gap"])
    for row in gap_report(mdp, gammas):
        writer.writerow([row.gamma, row.policy, repr(row.average_reward),
                         repr(row.optimal_gain), repr(row.gap)])


def build_parser():
    parser = argparse.ArgumentParser(prog="avgreward", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="exact discounted or average-reward solve")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mdp", help="MDP JSON file")
    src.add_argument("--env", help="environment spec to export, e.g. delayed")
    p.add_argument("--criterion", choices=("discounted", "average"), default="average")
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--ref-state", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("export", help="write an environment's tabular model as MDP JSON")
    p.add_argument("--env", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("train", help="train one agent and write its evaluation CSV")
    p.add_argument("--agent", required=True, choices=sorted(AGENT_KINDS) + list(DEEP_KINDS))
    p.add_argument("--env", required=True)
    p.add_argument("--config", help="JSON file of agent config fields")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--ref-state", type=int, help="reference state index (rviq, ddrviq)")
    p.add_argument("--save-params", help="deep agents: write the online network checkpoint")
    p.add_argument("--load-params", help="deep agents: start from this checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run an experiment grid from a JSON config")
    p.add_argument("config")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("aggregate", help="mean/min/max envelopes for a run directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("summarize", help="tail mean/std of one run CSV")
    p.add_argument("csv")
    p.add_argument("--tail", type=int, default=10)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("gap", help="average-reward gap of discounted-optimal policies")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mdp")
    src.add_argument("--env")
    p.add_argument("--gammas", default="0.1,0.5,0.9,0.99,0.999")
    p.set_defaults(func=cmd_gap)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except (AvgRewardError, OSError, json.JSONDecodeError) as exc:
        print(f"avgreward: error: {exc}", file=sys.stderr)
        return 2
