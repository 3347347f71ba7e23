"""``arena`` command line: run, compare, sweep, verify, replay."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .dynamics import ALGORITHMS, RunTrace
from .equilibria import ENUMERATION_LIMIT, is_pareto_optimal, is_psne, report
from .harness import ConfigError, ExperimentConfig


def parse_seeds(text: str) -> list[int]:
    """``"3"``, ``"0,2,5"`` or ``"0-9"`` (inclusive)."""
    seeds: list[int] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        lo, dash, hi = part.partition("-")
        try:
            if dash:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise ConfigError(f"bad seed list {text!r}") from None
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    doc: dict = {}
    if args.preset:
        doc.update(harness.preset(args.preset))
    if args.config:
        file_doc = harness.load_config(args.config)
        dynamics = {**doc.get("dynamics", {}), **file_doc.pop("dynamics", {})}
        doc.update(file_doc)
        doc["dynamics"] = dynamics
    if args.game:
        doc["game"] = args.game
    if args.algo:
        doc["algorithms"] = [a.strip() for a in args.algo.split(",") if a.strip()]
    if args.seeds is not None:
        doc["seeds"] = parse_seeds(args.seeds)
    if args.out:
        doc["out_dir"] = args.out
    for item in args.set or []:
        key, eq, value = item.partition("=")
        if not eq:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        doc.setdefault("dynamics", {})[key.strip()] = _parse_value(value)
    if getattr(args, "axis", None):
        doc["sweep_axis"] = args.axis
    if getattr(args, "values", None):
        doc["sweep_values"] = parse_seeds(args.values)
    return ExperimentConfig.from_dict(doc)


def _print(doc) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True, default=str))


def cmd_run(args) -> int:
    config = build_config(args)
    for rec in harness.run(config):
        s = rec.summary()
        print(f"{s['algorithm']} seed={s['seed']} W={s['final_W']:.6g} status={s['status']} "
              f"converged_at={s['iterations_to_convergence']} trace={s.get('trace')}")
    return 0


def cmd_compare(args) -> int:
    config = build_config(args)
    summary = harness.compare(config)
    _print(summary.to_dict())
    return 0


def cmd_sweep(args) -> int:
    config = build_config(args)
    rows = harness.sweep(config)
    _print(rows)
    return 0


def cmd_verify(args) -> int:
    if not args.game:
        raise ConfigError("verify needs --game")
    game = harness.build_game(args.game, args.seed)
    doc = {"game": args.game, "name": game.name, "n_profiles": game.n_profiles,
           "report": report(game, args.limit).to_dict()}
    enumerable = game.n_profiles <= args.limit
    if args.profile:
        try:
            prof = game.check_profile(int(x) for x in args.profile.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad profile {args.profile!r}: {exc}") from None
        doc["profile"] = {
            "profile": list(prof),
            "W": game.global_utility(prof),
            "is_psne": is_psne(game, prof),
            "is_pareto_optimal": is_pareto_optimal(game, prof, args.limit) if enumerable else None,
        }
    if args.trace:
        try:
            trace = RunTrace.from_csv(args.trace)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read trace {args.trace}: {exc}") from None
        doc["trace"] = harness.verify_trace(game, trace, args.burn_in)
    _print(doc)
    return 0


def cmd_replay(args) -> int:
    summary = Path(args.summary)
    if not summary.exists():
        raise ConfigError(f"no such summary: {summary}")
    doc = json.loads(summary.read_text())
    result = harness.replay(summary)
    fresh = result.trace.to_csv()
    identical = None
    if "trace" in doc and Path(doc["trace"]).exists():
        identical = Path(doc["trace"]).read_text() == fresh
    _print({"algorithm": result.algorithm, "W": result.W, "profile": list(result.profile),
            "trace_identical": identical})
    return 0 if identical is not False else 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--game", help="fixture name, generator spec (resource:n=20,m=5) or instance file")
    p.add_argument("--algo", help=f"comma-separated algorithms from {', '.join(ALGORITHMS)}")
    p.add_argument("--seeds", help="seed list: 3, 0,2,5 or 0-9")
    p.add_argument("--out", help=f"output directory (default ${harness.OUT_DIR_ENV} or ./{harness.DEFAULT_OUT_DIR})")
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--preset", help=f"named experiment: {', '.join(sorted(harness.PRESETS))}")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dynamics setting")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arena", description="Regret-matching experiments on normal-form games")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run algorithms over seeds and write traces")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several algorithms on the same instances and aggregate")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="compare across a range of player or resource counts")
    _add_common(p)
    p.add_argument("--axis", choices=["n", "m"])
    p.add_argument("--values", help="axis values, e.g. 3,5,8")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="equilibrium report for a game, profile or trace")
    p.add_argument("--game")
    p.add_argument("--seed", type=int, default=0, help="instance seed for generator specs")
    p.add_argument("--profile", help="comma-separated action indices")
    p.add_argument("--trace", help="trace CSV to diagnose")
    p.add_argument("--burn-in", type=float, default=0.5)
    p.add_argument("--limit", type=int, default=ENUMERATION_LIMIT, help="enumeration guard")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("replay", help="re-run a seed from its summary JSON and compare traces")
    p.add_argument("summary")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"arena: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
