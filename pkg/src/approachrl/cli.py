"""Command line entry point.

Subcommands: run (execute an experiment config), gen-env (write a benchmark
MDP file plus target presets), bounds (print the convergence slack for given
parameters), cache-dump (show a finished run's policy cache).

Exit codes: 0 complete/feasible, 2 infeasible, 3 empirically infeasible,
4 configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from .config import (ConfigError, ExperimentConfig, build_mdp, build_oracle,
                     load_config, target_from_spec)
from .convex import Box
from .envs import generate
from .mdp import save_mdp
from .oracles import PolicyCache
from .solver import (EMPIRICALLY_INFEASIBLE, FEASIBLE, INFEASIBLE, GameConfig,
                     distance_bound, maximize_reward, run_distance,
                     run_feasibility, run_general, solve_game, write_trace_csv)

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_EMPIRICALLY_INFEASIBLE = 3
EXIT_CONFIG = 4

_STATUS_CODES = {
    FEASIBLE: EXIT_OK,
    "complete": EXIT_OK,
    INFEASIBLE: EXIT_INFEASIBLE,
    EMPIRICALLY_INFEASIBLE: EXIT_EMPIRICALLY_INFEASIBLE,
}


def _plot_distance(trace, path):
    """Best-effort plot; failures degrade to CSV-only output with a warning."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        ts = [row.t for row in trace.rows]
        ds = [row.running_distance for row in trace.rows]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(ts, ds)
        ax.set_xlabel("round")
        ax.set_ylabel("distance of running mean to target")
        ax.set_yscale("log" if min(ds, default=1.0) > 0 else "linear")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    except Exception as exc:  # noqa: BLE001 - plotting must never fail a run
        warnings.warn(f"plotting failed ({exc}); results are in trace.csv")


def _write_game_csv(result, path):
    n = result.lambda_history.shape[1]
    m = result.u_history.shape[1]
    lcols = ",".join(f"lambda_{j}" for j in range(n))
    ucols = ",".join(f"u_{j}" for j in range(m))
    with open(path, "w") as fh:
        fh.write(f"t,{lcols},{ucols},loss\n")
        for t in range(result.lambda_history.shape[0]):
            lam = ",".join(f"{v:.17g}" for v in result.lambda_history[t])
            u = ",".join(f"{v:.17g}" for v in result.u_history[t])
            fh.write(f"{t + 1},{lam},{u},{result.losses[t]:.17g}\n")


def _run(cfg: ExperimentConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    summary = {"algorithm": cfg.algorithm, "seed": cfg.seed}

    if cfg.algorithm == "solve_game":
        g = cfg.game
        try:
            game = GameConfig(payoff=np.asarray(g["payoff"], dtype=float),
                              lambda_set=Box(np.asarray(g["lambda_lower"], dtype=float),
                                             np.asarray(g["lambda_upper"], dtype=float)),
                              u_set=Box(np.asarray(g["u_lower"], dtype=float),
                                        np.asarray(g["u_upper"], dtype=float)),
                              rounds=cfg.rounds, eta=cfg.eta)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad game block: {exc}") from exc
        result = solve_game(game)
        _write_game_csv(result, out_dir / "trace.csv")
        cert = result.certificate
        summary.update({
            "status": "complete",
            "value_estimate": cert.value,
            "regret": cert.regret,
            "delta": cert.delta,
            "min_payoff_at_lambda_bar": cert.min_payoff_at_lambda_bar,
            "max_payoff_at_u_bar": cert.max_payoff_at_u_bar,
            "certified": cert.certified,
            "lambda_bar": [float(v) for v in result.lambda_bar],
            "u_bar": [float(v) for v in result.u_bar],
        })
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
        print(f"solve_game: v~{cert.value:.6g} delta={cert.delta:.3g} "
              f"certified={cert.certified}")
        return EXIT_OK

    oracle = build_oracle(cfg)
    mdp, env_info = build_mdp(cfg)
    target = target_from_spec(cfg.target, env_info)
    status = "complete"
    trace = None
    cache = None

    if cfg.algorithm == "maximize_reward":
        rs = cfg.reward_search
        result = maximize_reward(mdp, target, int(rs["coord"]), float(rs["lo"]),
                                 float(rs["hi"]), oracle, steps=int(rs.get("steps", 6)),
                                 rounds=cfg.rounds, delta=float(cfg.general.get("delta", 0.5)),
                                 rng=rng, n_workers=cfg.threads)
        status = result.floor_outcome.status if result.threshold is None else FEASIBLE
        # trace.csv documents the best certified-feasible run (the floor run
        # when even that failed); the other steps are summarized below.
        best = result.best_outcome or result.floor_outcome
        trace = best.trace
        summary.update({
            "status": status,
            "threshold": result.threshold,
            "resolution": result.resolution,
            "kappa": result.kappa,
            "delta": result.delta,
            "oracle_calls": result.oracle_calls,
            "cache_hits": result.cache_hits,
            "steps": [{"threshold": b, "status": st, "run": rec}
                      for b, st, rec in result.step_records],
        })
        cache = result.cache
    elif cfg.algorithm == "general":
        gen = cfg.general
        out = run_general(mdp, target, oracle, rounds=cfg.rounds,
                          delta=float(gen.get("delta", 0.5)),
                          variant=gen.get("variant", "distance"), eta=cfg.eta,
                          kappa=gen.get("kappa"), rng=rng, n_workers=cfg.threads)
        status, trace = out.status, out.trace
        summary.update({"status": status, "distance": out.distance, **out.extras})
        if out.witness_iteration is not None:
            summary["witness_iteration"] = out.witness_iteration
            summary["witness_loss"] = out.witness_loss
    elif cfg.algorithm == "cone_feasibility":
        if not target.is_cone:
            raise ConfigError("cone_feasibility needs a cone target; "
                              "use algorithm 'general' for compact sets")
        out = run_feasibility(mdp, target, oracle, rounds=cfg.rounds, eta=cfg.eta,
                              rng=rng, n_workers=cfg.threads)
        status, trace = out.status, out.trace
        summary.update({"status": status, "distance": out.distance})
        if out.witness_iteration is not None:
            summary["witness_iteration"] = out.witness_iteration
            summary["witness_loss"] = out.witness_loss
    else:  # cone_distance
        if not target.is_cone:
            raise ConfigError("cone_distance needs a cone target; "
                              "use algorithm 'general' for compact sets")
        _, trace = run_distance(mdp, target, oracle, rounds=cfg.rounds, eta=cfg.eta,
                                rng=rng, n_workers=cfg.threads)
        summary.update({"status": "complete"})

    if trace is not None:
        write_trace_csv(trace, out_dir / "trace.csv")
        summary["run"] = trace.summary()
        _plot_distance(trace, out_dir / "distance.svg")
        cache = cache or trace.cache
    if cache is not None:
        cache.dump_csv(out_dir / "cache.csv")
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    line = f"{cfg.algorithm}: status={status}"
    if summary.get("run", {}).get("final_distance") is not None:
        line += f" distance={summary['run']['final_distance']:.6g}"
    if summary.get("threshold") is not None:
        line += f" threshold={summary['threshold']:.6g}"
    print(line)
    return _STATUS_CODES.get(status, EXIT_OK)


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    out = args.out or cfg.output
    if out is None:
        raise ConfigError("no output directory: set 'output' in the config or pass --out")
    return _run(cfg, Path(out))


def _parse_param(raw: str):
    if "=" not in raw:
        raise ConfigError(f"--param expects key=value, got {raw!r}")
    key, val = raw.split("=", 1)
    return key, yaml.safe_load(val)


def _cmd_gen_env(args) -> int:
    params = dict(_parse_param(p) for p in args.param)
    try:
        mdp, info = generate(args.name, seed=args.seed, **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot generate environment: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mdp(mdp, out / "mdp.txt")
    (out / "env.yaml").write_text(yaml.safe_dump(info, sort_keys=True))
    print(f"wrote {out / 'mdp.txt'} ({mdp.num_states} states, {mdp.num_actions} actions, "
          f"d={mdp.dim}) and {out / 'env.yaml'}")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    try:
        value = distance_bound(args.bound, args.gamma, args.eps0, args.eps1,
                               args.rounds, kappa=args.kappa, delta=args.delta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{value:.17g}")
    return EXIT_OK


def _cmd_cache_dump(args) -> int:
    path = Path(args.run_dir) / "cache.csv"
    if not path.exists():
        raise ConfigError(f"no cache dump found at {path}")
    sys.stdout.write(path.read_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="approachrl",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("gen-env", help="write a benchmark MDP + target presets")
    p_gen.add_argument("name", choices=("gridworld", "random_mdp"))
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--param", action="append", default=[],
                       help="generator parameter as key=value (repeatable)")
    p_gen.set_defaults(func=_cmd_gen_env)

    p_bounds = sub.add_parser("bounds", help="print the convergence slack")
    p_bounds.add_argument("--bound", type=float, required=True)
    p_bounds.add_argument("--gamma", type=float, required=True)
    p_bounds.add_argument("--eps0", type=float, default=0.0)
    p_bounds.add_argument("--eps1", type=float, default=0.0)
    p_bounds.add_argument("--rounds", type=int, required=True)
    p_bounds.add_argument("--kappa", type=float, default=None)
    p_bounds.add_argument("--delta", type=float, default=None)
    p_bounds.set_defaults(func=_cmd_bounds)

    p_cache = sub.add_parser("cache-dump", help="print a run's policy cache CSV")
    p_cache.add_argument("--run-dir", required=True)
    p_cache.set_defaults(func=_cmd_cache_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
