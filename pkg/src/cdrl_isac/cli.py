"""Command-line entry point: ``cdrl-isac <verb> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import cdrl, harness, qnet
from .baselines import FixedPolicy
from .config import RunConfig
from .scenario import ScenarioScript


def _u64(text: str) -> int:
    v = int(text, 10)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed out of range: {text}")
    return v


def _kv(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def load_config(args) -> RunConfig:
    overrides = dict(args.set or [])
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig().with_overrides(overrides)


def dual_path(checkpoint: str | Path) -> Path:
    return Path(str(checkpoint) + ".lambda")


def load_policy(args, cfg: RunConfig) -> harness.GreedyCdrl:
    params = qnet.load_checkpoint(args.checkpoint)
    lam = args.lam
    if lam is None:
        side = dual_path(args.checkpoint)
        lam = float(side.read_text().strip()) if side.exists() else 0.0
    return harness.GreedyCdrl(params, cfg, lam)


def _script(args) -> ScenarioScript | None:
    return ScenarioScript.load(args.script) if args.script else None


def cmd_train(args) -> None:
    cfg = load_config(args)
    res = cdrl.run_training(cfg, slots=args.slots)
    qnet.save_checkpoint(res.params, args.checkpoint)
    dual_path(args.checkpoint).write_text(f"{res.dual.lam:.17g}\n")
    if args.out:
        harness.write_table(*harness.training_table(res.records, cfg.max_targets), args.out)
    tail = res.records[-max(1, len(res.records) // 10):]
    mean_dwell = sum(r.dwells.sum() for r in tail) * cfg.T0 / max(1, len(tail))
    print(f"trained {len(res.records)} slots; final lambda {res.dual.lam:.6g}; last-10% mean dwell {mean_dwell:.4f} s")


def cmd_eval(args) -> None:
    cfg = load_config(args)
    m = harness.run_episode(load_policy(args, cfg), cfg, cfg.seed, script=_script(args), slots=args.slots)
    harness.export_csv(m, args.out)
    print(f"cdrl mean sum rate {m.mean_rate:.6g} over {len(m)} slots")


def cmd_baseline(args) -> None:
    cfg = load_config(args)
    pol = FixedPolicy(args.fraction)
    m = harness.run_episode(pol, cfg, cfg.seed, script=_script(args), slots=args.slots)
    harness.export_csv(m, args.out)
    print(f"{pol.name} mean sum rate {m.mean_rate:.6g} over {len(m)} slots")


def cmd_compare(args) -> None:
    cfg = load_config(args)
    policies = [FixedPolicy(float(f)) for f in args.fractions.split(",") if f.strip()]
    if args.checkpoint:
        policies.insert(0, load_policy(args, cfg))
    seeds = harness.episode_seeds(cfg.seed, args.scenarios)
    rows = harness.compare_policies(policies, seeds, cfg, slots=args.slots)
    if args.out:
        harness.write_table(*harness.summary_table(rows), args.out)
    for r in rows:
        print(f"{r.policy:>12}  {r.mean_rate:12.4f}  {r.percentage:7.2f}%")


def cmd_simulate(args) -> None:
    cfg = load_config(args)
    res = harness.simulate_tracking(cfg, cfg.seed, runs=args.runs, slots=args.slots, dwell_fraction=args.dwell)
    if args.out:
        harness.write_table(["slot", "mean_nees"], ([k, v] for k, v in enumerate(res.per_slot)), args.out)
    print(f"average NEES {res.average:.4f} over {args.runs} runs x {args.slots} slots")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdrl-isac", description="ISAC dwell-time allocation simulator and trainer")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--set", action="append", type=_kv, metavar="KEY=VALUE", help="override one config key")
        sp.add_argument("--seed", type=_u64, help="unsigned 64-bit seed (overrides config)")
        return sp

    def policy_args(sp, required):
        sp.add_argument("--checkpoint", required=required, help="qnet-v1 checkpoint file")
        sp.add_argument("--lam", type=float, help="dual value fed to the network (default: saved with checkpoint)")

    sp = common(sub.add_parser("train", help="train the constrained DQN"))
    sp.add_argument("--checkpoint", required=True, help="where to write the trained network")
    sp.add_argument("--out", help="per-slot training CSV")
    sp.add_argument("--slots", type=int, help="training slots (default: train_slots)")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("eval", help="greedy evaluation of a checkpoint"))
    policy_args(sp, True)
    sp.add_argument("--script", help="scenario script; random spawns when omitted")
    sp.add_argument("--slots", type=int, help="episode length (default: t_max_slots)")
    sp.add_argument("--out", required=True, help="metrics CSV")
    sp.set_defaults(func=cmd_eval)

    sp = common(sub.add_parser("baseline", help="evaluate a fixed dwell fraction"))
    sp.add_argument("--fraction", type=float, required=True)
    sp.add_argument("--script")
    sp.add_argument("--slots", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_baseline)

    sp = common(sub.add_parser("compare", help="paired comparison of CDRL and fixed schemes"))
    policy_args(sp, False)
    sp.add_argument("--fractions", default="0.1,0.2,0.3")
    sp.add_argument("--scenarios", type=int, default=10, help="number of seed-paired scenarios")
    sp.add_argument("--slots", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)

    sp = common(sub.add_parser("simulate", help="tracking-only runs reporting filter consistency"))
    sp.add_argument("--runs", type=int, default=500)
    sp.add_argument("--slots", type=int, default=50)
    sp.add_argument("--dwell", type=float, default=0.5, help="dwell fraction per slot")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"cdrl-isac {args.verb}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
