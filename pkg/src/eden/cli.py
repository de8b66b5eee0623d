"""Command-line surface: seed, train, lock, inspect, export metrics, replay.

Exit codes:
  0  success
  2  invalid arguments or configuration
  3  a named input file is missing
  4  schema or format-version violation
  5  runtime failure
  1  replay divergence
"""
from __future__ import annotations

import argparse
import csv
import json
import random
import sys

from .config import ConfigError, EngineConfig
from .runner import InputProbe, OutputProbe, run_epoch
from . import store

EXIT_OK = 0
EXIT_DIVERGENT = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_RUNTIME = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        self.message = message
        super().__init__(message)


def _load_state(path: str):
    try:
        return store.load(path)
    except store.SaveStateError as exc:
        code = EXIT_MISSING if "not found" in str(exc) else EXIT_SCHEMA
        raise CliError(code, str(exc)) from exc


def _attach_pattern(entity, pattern_path: str) -> None:
    try:
        with open(pattern_path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING, f"pattern file not found: {pattern_path}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_SCHEMA, f"malformed pattern file: {exc}") from exc
    if isinstance(data, list):
        data = {"input_probes": data}
    try:
        entity.input_probes = [
            InputProbe(probe_id=int(spec["probe_id"]),
                       position=tuple(float(c) for c in spec["position"]),
                       frames=spec["frames"],
                       cursor=int(spec.get("cursor", 0)),
                       noise=float(spec.get("noise", 0.0)))
            for spec in data.get("input_probes", [])]
        entity.output_probes = [
            OutputProbe(probe_id=int(spec["probe_id"]),
                        position=tuple(float(c) for c in spec["position"]),
                        radius=float(spec["radius"]),
                        history=list(spec.get("history", [])))
            for spec in data.get("output_probes", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_SCHEMA, f"invalid pattern file: {exc}") from exc


def cmd_init(args) -> int:
    try:
        config = EngineConfig.from_file(args.config)
    except FileNotFoundError:
        raise CliError(EXIT_MISSING, f"config file not found: {args.config}")
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_SCHEMA, f"malformed config file: {exc}")
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc))
    if args.seed_override is not None:
        config.seed = args.seed_override
    from .runner import seed_entity
    entity = seed_entity(config)
    store.save(entity, args.out)
    print(f"initialized entity with {len(entity.nodes)} nodes -> {args.out}")
    return EXIT_OK


def run_training(entity, epochs: int, log_path=None, rules=None):
    """Shared epoch loop: env rules before Propagate, one log record per epoch."""
    reports = []
    for _ in range(epochs):
        events = store.apply_environment_rules(entity, rules) if rules else []
        report = run_epoch(entity)
        reports.append(report)
        if log_path:
            store.append_session_record(log_path, report, entity, events)
    return reports


def cmd_train(args) -> int:
    entity = _load_state(args.state)
    if args.epochs == 0:
        print("0 epochs requested; state untouched")
        return EXIT_OK
    if args.seed_override is not None:
        entity.rng = random.Random(args.seed_override)
    if args.pattern:
        _attach_pattern(entity, args.pattern)
    rules = None
    if args.rules:
        try:
            rules = store.load_rules(args.rules)
        except FileNotFoundError:
            raise CliError(EXIT_MISSING, f"rules file not found: {args.rules}")
        except (store.RuleError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_SCHEMA, f"invalid rules file: {exc}")
    reports = run_training(entity, args.epochs, args.log, rules)
    store.save(entity, args.state)
    total_spikes = sum(len(evs) for r in reports for evs in r.spikes.values())
    print(f"trained {args.epochs} epochs: {len(entity.nodes)} nodes, "
          f"{total_spikes} spikes, clock={entity.entity_clock}")
    return EXIT_OK


def cmd_lock(args) -> int:
    entity = _load_state(args.state)
    store.lock(entity)
    store.save(entity, args.state)
    print(f"locked {args.state}")
    return EXIT_OK


def cmd_unlock(args) -> int:
    entity = _load_state(args.state)
    store.unlock(entity)
    store.save(entity, args.state)
    print(f"unlocked {args.state}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    entity = _load_state(args.state)
    stabilities = [n.stability_index for n in entity.nodes.values()]
    print(f"entity clock : {entity.entity_clock}")
    print(f"locked       : {entity.locked}")
    print(f"nodes        : {len(entity.nodes)}")
    print(f"functomes    : {len(entity.functomes)}")
    print(f"grid payloads: {len(entity.grid.payloads)}")
    print(f"input probes : {len(entity.input_probes)}")
    print(f"output probes: {len(entity.output_probes)}")
    if stabilities:
        print(f"stability    : mean={sum(stabilities) / len(stabilities):.6f} "
              f"min={min(stabilities):.6f} max={max(stabilities):.6f}")
    from .functome import node_hash
    for nid in sorted(entity.nodes):
        node = entity.nodes[nid]
        print(f"  node {nid}: soma={tuple(round(c, 3) for c in node.soma_position)} "
              f"dendrites={len(node.dendrites)} terminals={len(node.axon_terminals)} "
              f"stability={node.stability_index:.6f} hash={node_hash(node)[:12]}")
    return EXIT_OK


def cmd_export_metrics(args) -> int:
    try:
        records = store.read_session_log(args.log)
    except FileNotFoundError:
        raise CliError(EXIT_MISSING, f"session log not found: {args.log}")
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "node_count", "spike_count",
                         "stability_mean", "stability_min", "stability_max",
                         "pruned", "born"])
        for rec in records:
            stab = [v for v in rec["stability"].values()]
            spikes = sum(len(v) for v in rec["spikes"].values())
            writer.writerow([
                rec["epoch"], len(rec["nodes"]), spikes,
                f"{sum(stab) / len(stab):.9f}" if stab else "",
                f"{min(stab):.9f}" if stab else "",
                f"{max(stab):.9f}" if stab else "",
                len(rec["pruned"]), len(rec["born"]),
            ])
    print(f"wrote {len(records)} rows -> {args.out}")
    return EXIT_OK


def replay_reports(state_path: str, epochs: int) -> tuple[str, str]:
    """Run the same save state twice from scratch; return both report streams."""
    streams = []
    for _ in range(2):
        entity = _load_state(state_path)
        reports = [run_epoch(entity).to_dict() for _ in range(epochs)]
        streams.append(store.dumps_canonical(reports))
    return streams[0], streams[1]


def cmd_replay(args) -> int:
    first, second = replay_reports(args.state, args.epochs)
    if first == second:
        print("identical")
        return EXIT_OK
    print("divergent")
    return EXIT_DIVERGENT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eden",
        description="Energy-routed spiking process-node simulation engine",
        epilog=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="seed a new entity from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="save state path (*.eden.json)")
    p.add_argument("--seed-override", type=int, default=None)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("train", help="run training epochs on a save state")
    p.add_argument("--state", required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--pattern", default=None, help="input pattern JSON file")
    p.add_argument("--log", default=None, help="session log path (*.session.jsonl)")
    p.add_argument("--rules", default=None, help="environment rules JSON file")
    p.add_argument("--seed-override", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("lock", help="lock a save state (Propagate phase only)")
    p.add_argument("--state", required=True)
    p.set_defaults(func=cmd_lock)

    p = sub.add_parser("unlock", help="restore full phases on a locked state")
    p.add_argument("--state", required=True)
    p.set_defaults(func=cmd_unlock)

    p = sub.add_parser("inspect", help="summarize a save state")
    p.add_argument("--state", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("export-metrics", help="per-epoch CSV from a session log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_metrics)

    p = sub.add_parser("replay", help="verify determinism by running twice and diffing")
    p.add_argument("--state", required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc.message}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error[{EXIT_RUNTIME}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
