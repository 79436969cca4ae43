"""Command line entry point: ``boostctl <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError

log = logging.getLogger("boostctl")


def _scenario(args, **overrides):
    from .simulate import ScenarioConfig

    doc = {}
    if args.config:
        doc.update(json.loads(Path(args.config).read_text()))
        unknown = set(doc) - set(ScenarioConfig().to_dict())
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    if args.params:
        doc["params_set"] = args.params
    if args.seed is not None:
        doc["seed"] = args.seed
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return ScenarioConfig.from_dict(doc)


def _out(args, default="out"):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args):
    return 0 if args.seed is None else args.seed


# -- subcommands -------------------------------------------------------------------------

def cmd_simulate(args):
    from .harness import build_controller
    from .metrics import mae, step_metrics
    from .simulate import ConstantDuty, PIControl, run_closed_loop

    scenario = _scenario(args, v_ref=args.vref, profile=args.profile)
    if args.controller == "pi":
        controller = PIControl((args.kp, args.ki))
    elif args.controller == "constant":
        controller = ConstantDuty(args.duty)
    else:
        controller = build_controller(args.controller, scenario, args.artifacts)
    traj = run_closed_loop(controller, scenario)
    out = _out(args)
    path = out / f"{args.controller}_{scenario.scenario_id}.csv"
    traj.to_csv(path)
    summary = {"trajectory": str(path), "mae": mae(traj), **step_metrics(traj).as_dict()}
    print(json.dumps(summary, indent=2))
    return 0


def cmd_tune_pi(args):
    from .training import tune_pi_artifacts

    methods = ("pso", "ga") if args.method == "both" else (args.method,)
    docs = tune_pi_artifacts(_out(args), _scenario(args, v_ref=args.vref), _seed(args),
                             args.workers, methods)
    print(json.dumps({m: {k: d[k] for k in ("k_p", "k_i", "mae")} for m, d in docs.items()},
                     indent=2))
    return 0


def cmd_train_ann(args):
    from .training import train_ann_artifact

    _, train_mse, test_mse = train_ann_artifact(_out(args), _seed(args), args.samples)
    print(json.dumps({"train_mse": train_mse, "test_mse": test_mse,
                      "artifact": str(Path(args.out or "out") / "ann.json")}, indent=2))
    return 0


def cmd_train_ppo(args):
    from .ppo import PPOConfig
    from .training import train_for_reference

    overrides = {"episodes": args.episodes, "lr_actor": args.lr, "lr_critic": args.lr}
    config = PPOConfig(seed=_seed(args), **{k: v for k, v in overrides.items() if v is not None})
    params = args.params or "desk"
    outcome = train_for_reference(args.vref, _seed(args), params, config, _out(args))
    print(json.dumps(outcome.header_extra(), indent=2))
    return 0


def cmd_evaluate(args):
    from .harness import run_experiment

    out = _out(args)
    report = run_experiment(args.artifacts, params_set=args.params or "desk",
                            pi_source=args.pi_source, out_dir=out)
    print(json.dumps(report.summary, indent=2))
    return 0 if not report.summary["failed"] else 1


def cmd_verify(args):
    from .checks import exit_status, verify
    from .harness import Report

    report = Report.load(args.report) if args.report else None
    results = verify(report, args.artifacts, train_missing=args.train_missing,
                     seed=_seed(args), workers=args.workers)
    for r in results:
        print(r.line())
    verdict = {"passed": exit_status(results) == 0, "criteria": [r.as_dict() for r in results]}
    if args.out:
        (_out(args) / "verdict.json").write_text(json.dumps(verdict, indent=2) + "\n")
    print(json.dumps(verdict))
    return exit_status(results)


def cmd_report(args):
    from .harness import Report, reference_row

    report = Report.load(args.report)
    header = f"{'controller':10s} {'scenario':14s} {'rise_s':>9s} {'settle_s':>9s} " \
             f"{'os_%':>7s} {'us_%':>7s} {'mae':>7s} | reference rise/settle/os/us"
    print(header)
    for row in report.rows:
        d = row.as_dict()
        ref = reference_row(row.controller, row.profile, row.v_ref)
        ref_txt = "-" if ref is None else "/".join(
            f"{ref[k]:g}" for k in ("rise_s", "settle_s", "overshoot_pct", "undershoot_pct"))
        if row.status != "ok":
            print(f"{row.controller:10s} {row.scenario:14s} failed: {row.error}")
            continue
        print(f"{row.controller:10s} {row.scenario:14s} {d['rise_s']:9.4f} {d['settle_s']:9.4f} "
              f"{d['overshoot_pct']:7.3f} {d['undershoot_pct']:7.3f} {d['mae']:7.3f} | {ref_txt}")
    return 0


# -- parser -------------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with scenario fields")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--params", choices=("paper", "desk"), default=None)
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="boostctl",
                                     description="Boost converter control workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one controller on one scenario")
    p.add_argument("--controller", default="pi",
                   choices=("pi", "constant", "pi-pso", "pi-ga", "ann", "rl"))
    p.add_argument("--kp", type=float, default=0.002)
    p.add_argument("--ki", type=float, default=0.315)
    p.add_argument("--duty", type=float, default=0.5)
    p.add_argument("--vref", type=float, default=None)
    p.add_argument("--profile", choices=("fixed", "step"), default=None)
    p.add_argument("--artifacts", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune-pi", parents=[common], help="PSO/GA tuning of the PI gains")
    p.add_argument("--method", choices=("pso", "ga", "both"), default="both")
    p.add_argument("--vref", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_tune_pi)

    p = sub.add_parser("train-ann", parents=[common], help="train the feedforward duty network")
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=cmd_train_ann)

    p = sub.add_parser("train-ppo", parents=[common], help="train a PPO agent at one reference")
    p.add_argument("--vref", type=float, default=48.0)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--lr", type=float, default=None, help="actor and critic learning rate")
    p.set_defaults(func=cmd_train_ppo)

    p = sub.add_parser("evaluate", parents=[common], help="run the controller x scenario grid")
    p.add_argument("--artifacts", default="artifacts")
    p.add_argument("--pi-source", choices=("published", "tuned"), default="published")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify", parents=[common], help="check the acceptance criteria")
    p.add_argument("--report", default=None, help="report.json from evaluate")
    p.add_argument("--artifacts", default=None)
    p.add_argument("--train-missing", action="store_true",
                   help="produce missing artifacts instead of skipping their criteria")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", parents=[common], help="print a report next to reference values")
    p.add_argument("report", help="report.json from evaluate")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"boostctl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
