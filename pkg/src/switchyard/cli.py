"""Command-line entry points: train, evaluate, analyze, serve, make-fixtures.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fixtures
from .actions import reduce_action_space
from .analyze import analyze_logs, render_analysis
from .controller import ControllerConfig
from .environment import EnvConfig
from .evaluate import evaluate_agents, render_table, results_payload
from .policy import load_policy, save_policy
from .ppo import PPOConfig, train
from .scenario import (SchemaError, load_action_set, load_chronic, load_grid,
                       save_action_set, save_chronic, save_grid)

USAGE_ERROR, DATA_ERROR, RUNTIME_ERROR = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliUsageError(message)


class CliUsageError(Exception):
    pass


def _load_chronics_dir(path: str, grid):
    files = sorted(Path(path).glob("*.chronic"))
    if not files:
        raise SchemaError(f"{path}: no .chronic files found")
    return [load_chronic(f, grid) for f in files]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="switchyard",
                     description="grid operation simulator and controller")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the policy")
    p_train.add_argument("--grid", required=True)
    p_train.add_argument("--chronics-dir", required=True)
    p_train.add_argument("--actions", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--envs", type=int, default=4)
    p_train.add_argument("--epochs", type=int, default=4)
    p_train.add_argument("--rounds", type=int, default=8)
    p_train.add_argument("--episodes-per-round", type=int, default=1)
    p_train.add_argument("--sample-size", type=int, default=2048)
    p_train.add_argument("--minibatch", type=int, default=256)
    p_train.add_argument("--actor-hidden", default="1000,1000,1000")
    p_train.add_argument("--lr", type=float, default=0.003)
    p_train.add_argument("--entropy-coef", type=float, default=0.0)
    p_train.add_argument("--select-every", type=int, default=None)
    p_train.add_argument("--select-episodes", type=int, default=8)
    p_train.add_argument("--metrics", default=None)

    p_eval = sub.add_parser("evaluate", help="run agents over a chronic suite")
    p_eval.add_argument("--grid", required=True)
    p_eval.add_argument("--chronics-dir", required=True)
    p_eval.add_argument("--actions", required=True)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--agents", default="do_nothing,lookahead,guided")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default=None, help="machine-readable report (JSON)")
    p_eval.add_argument("--logs-dir", default=None)
    p_eval.add_argument("--rho-threshold", type=float, default=0.95)
    p_eval.add_argument("--top-k", type=int, default=5)

    p_an = sub.add_parser("analyze", help="action-diversity report from episode logs")
    p_an.add_argument("logs", nargs="+")
    p_an.add_argument("--out", default=None)
    p_an.add_argument("--threshold", type=float, default=0.95)

    p_serve = sub.add_parser("serve", help="operator console backend")
    p_serve.add_argument("--grid", required=True)
    p_serve.add_argument("--chronics-dir", required=True)
    p_serve.add_argument("--actions", required=True)
    p_serve.add_argument("--checkpoint", default=None)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8321)
    p_serve.add_argument("--rho-threshold", type=float, default=0.95)
    p_serve.add_argument("--top-k", type=int, default=5)
    p_serve.add_argument("--logs-dir", default=None)

    p_fix = sub.add_parser("make-fixtures",
                           help="write the shipped grids, chronic suites and action sets")
    p_fix.add_argument("--out", required=True)
    p_fix.add_argument("--grid", default="train5",
                       choices=["fig4", "train5", "eval14"])
    p_fix.add_argument("--count", type=int, default=20)
    p_fix.add_argument("--steps", type=int, default=288)
    p_fix.add_argument("--seed", type=int, default=100)
    p_fix.add_argument("--budget", type=int, default=12)
    return parser


def cmd_train(args) -> int:
    grid = load_grid(args.grid)
    chronics = _load_chronics_dir(args.chronics_dir, grid)
    action_set = load_action_set(args.actions)
    actor_hidden = tuple(int(x) for x in args.actor_hidden.split(",") if x)
    cfg = PPOConfig(learning_rate=args.lr, n_envs=args.envs,
                    epochs_per_update=args.epochs, rounds=args.rounds,
                    episodes_per_round=args.episodes_per_round,
                    sample_size=args.sample_size, minibatch_size=args.minibatch,
                    entropy_coef=args.entropy_coef,
                    select_every=args.select_every,
                    select_episodes=args.select_episodes,
                    actor_hidden=actor_hidden)
    sink = open(args.metrics, "w", encoding="utf-8") if args.metrics else None
    try:
        params, metrics = train(grid, chronics, action_set, ppo_cfg=cfg,
                                seed=args.seed, metrics_sink=sink)
    finally:
        if sink:
            sink.close()
    save_policy(params, args.out, extra_config={
        "grid": grid.name, "actions": len(action_set), "seed": args.seed})
    print(f"checkpoint written to {args.out} "
          f"({len(metrics)} rounds, final survival "
          f"{metrics[-1]['survival_rate']:.2f})" if metrics else
          f"checkpoint written to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    grid = load_grid(args.grid)
    chronics = _load_chronics_dir(args.chronics_dir, grid)
    action_set = load_action_set(args.actions)
    agent_kinds = [a.strip() for a in args.agents.split(",") if a.strip()]
    policy = None
    if args.checkpoint:
        policy, _ = load_policy(args.checkpoint)
        if policy.n_actions != len(action_set):
            raise SchemaError(
                f"checkpoint has {policy.n_actions} actions, action set has "
                f"{len(action_set)}")
    if "guided" in agent_kinds and policy is None:
        raise CliUsageError("the guided agent needs --checkpoint")
    cfg = ControllerConfig(rho_threshold=args.rho_threshold, rl_top_k=args.top_k)
    if args.logs_dir:
        Path(args.logs_dir).mkdir(parents=True, exist_ok=True)
    results = evaluate_agents(grid, chronics, agent_kinds, action_set, policy,
                              cfg, base_seed=args.seed, log_dir=args.logs_dir)
    print(render_table(results))
    if args.out:
        Path(args.out).write_text(
            json.dumps(results_payload(results), sort_keys=True, indent=1),
            encoding="utf-8")
    return 0


def cmd_analyze(args) -> int:
    report = analyze_logs(args.logs, threshold=args.threshold)
    print(render_analysis(report))
    if args.out:
        Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=1),
                                  encoding="utf-8")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceState, create_app

    grid = load_grid(args.grid)
    chronics = _load_chronics_dir(args.chronics_dir, grid)
    action_set = load_action_set(args.actions)
    policy = None
    if args.checkpoint:
        policy, _ = load_policy(args.checkpoint)
    cfg = ControllerConfig(rho_threshold=args.rho_threshold, rl_top_k=args.top_k)
    state = ServiceState(grid, {c.id: c for c in chronics}, action_set, policy,
                         cfg, EnvConfig(), logs_dir=args.logs_dir)
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_make_fixtures(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = {"fig4": fixtures.fig_grid, "train5": fixtures.training_grid,
            "eval14": fixtures.eval_grid}[args.grid]()
    grid_path = out / f"{grid.name}.grid"
    save_grid(grid, grid_path)
    chrono_dir = out / "chronics"
    chrono_dir.mkdir(exist_ok=True)
    suite = fixtures.adversarial_suite(grid, count=args.count, steps=args.steps,
                                       base_seed=args.seed)
    for chronic in suite:
        save_chronic(chronic, chrono_dir / f"{chronic.id}.chronic")
    action_set = reduce_action_space(grid, suite[:3], budget=args.budget,
                                     seed=args.seed)
    actions_path = out / f"{grid.name}.actions"
    save_action_set(action_set, actions_path, grid.name)
    print(f"wrote {grid_path}, {len(suite)} chronics and "
          f"{len(action_set)}-action set under {out}")
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "serve": cmd_serve,
    "make-fixtures": cmd_make_fixtures,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        return COMMANDS[args.command](args)
    except CliUsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (SchemaError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
