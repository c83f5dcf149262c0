"""Experiment command line: train, eval, landscape, ablate.

Exit codes: 0 success, 1 configuration error, 2 run failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import envs, trainer


class ConfigError(Exception):
    pass


def _load_config(path, seeds_override=None):
    try:
        cfg = trainer.RunConfig.from_json(path)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    if seeds_override is not None:
        cfg = trainer.RunConfig.from_dict(
            {**cfg.to_dict(), "seeds": tuple(range(seeds_override))})
    return cfg


def cmd_train(args):
    cfg = _load_config(args.config, args.seeds)
    summaries = trainer.train(cfg)
    failed = [s for s in summaries if s["status"] != "ok"]
    for s in summaries:
        if s["status"] == "ok":
            print(f"seed {s['seed']}: best_error {s['best_error']:.4f} "
                  f"after {s['epochs_run']} epochs -> {s['checkpoint_path']}")
        else:
            print(f"seed {s['seed']}: FAILED ({s['error']})", file=sys.stderr)
    return 2 if failed else 0


def cmd_eval(args):
    agent, experts, _ = trainer.load_agent(args.checkpoint)
    horizons = [int(h) for h in args.horizons.split(",")]
    runner = trainer.PolicyRunner(agent.encoder, agent.actor, agent.normalizer,
                                  agent.env.spec.v_max, agent.env.spec.dt)
    subset = experts[:args.episodes]
    errors = trainer.compounding_error(runner, subset, args.noise_sigma,
                                       horizons, args.prefix, args.eval_seed)
    result = {"noise_sigma": args.noise_sigma,
              "horizons": horizons,
              "errors": errors.tolist()}
    print(json.dumps(result, indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("horizon,error\n")
            for h, e in zip(horizons, errors):
                fh.write(f"{h},{e:.17g}\n")
    return 0


def cmd_landscape(args):
    agent, _, _ = trainer.load_agent(args.checkpoint)
    try:
        region = tuple(float(v) for v in args.region.split(","))
        if len(region) != 4:
            raise ValueError("need x0,y0,x1,y1")
    except ValueError as exc:
        raise ConfigError(f"bad --region: {exc}") from exc
    norm = agent.normalizer
    spec = agent.env.spec
    base_states = np.tile((norm.lo + norm.hi) / 2.0, (spec.n_agents, 1))
    base_actions = np.zeros((spec.n_agents, spec.action_dim))
    grid = trainer.landscape_grid(agent.disc, norm, spec.v_max, region,
                                  args.resolution, base_states, base_actions,
                                  agent_idx=args.agent)
    trainer.save_landscape_csv(args.out, grid)
    print(f"wrote {len(grid)} grid points to {args.out}")
    return 0


ABLATION_PARAMS = {"alpha_range", "beta"}


def cmd_ablate(args):
    if args.param not in ABLATION_PARAMS:
        raise ConfigError(f"--param must be one of {sorted(ABLATION_PARAMS)}")
    base = _load_config(args.config, args.seeds)
    values = args.values.split(",")
    rows = []
    any_failed = False
    for value in values:
        overrides = dict(base.to_dict())
        if args.param == "alpha_range":
            if value not in ("positive_unit", "symmetric", "extended"):
                raise ConfigError(f"bad alpha_range value {value!r}")
            overrides["alpha_mode"] = value
        else:
            frac = float(value)
            overrides["curriculum_enabled"] = frac > 0.0
            overrides["curriculum_beta_frac"] = frac
        overrides["out_dir"] = os.path.join(base.out_dir, f"{args.param}_{value}")
        cfg = trainer.RunConfig.from_dict(overrides)
        for summary in trainer.train(cfg):
            if summary["status"] != "ok":
                any_failed = True
                rows.append((value, summary["seed"], "", "", "failed"))
            else:
                rows.append((value, summary["seed"],
                             f"{summary['best_error']:.17g}",
                             f"{summary['final_error']:.17g}",
                             summary["epochs_run"]))
    out = os.path.join(base.out_dir, f"ablation_{args.param}.csv")
    with open(out, "w") as fh:
        fh.write("value,seed,best_error,final_error,epochs_run\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")
    print(f"wrote {out}")
    return 2 if any_failed else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ssmail",
                                     description="adversarial imitation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run training for every seed in the config")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=None,
                   help="override the config's seed list with range(N)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compounding-error evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    p.add_argument("--horizons", default="1,5,10,20")
    p.add_argument("--prefix", type=int, default=10)
    p.add_argument("--episodes", type=int, default=8)
    p.add_argument("--eval-seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("landscape", help="export a discriminator score grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--region", required=True, help="x0,y0,x1,y1")
    p.add_argument("--resolution", type=int, default=50)
    p.add_argument("--agent", type=int, default=0)
    p.add_argument("--out", default="landscape.csv")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("ablate", help="sweep alpha_range or beta over values")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", type=int, default=None)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
