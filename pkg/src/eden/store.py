"""Save states, lock mode, the session log and environmental control rules.

Save states are canonical JSON (`*.eden.json`): stable key order, shortest
round-trip decimals, format_version gate. Saving, loading and saving again is
a byte fixpoint, and the serialized RNG state makes resumed runs bit-identical
to uninterrupted ones. The session log (`*.session.jsonl`) is append-only,
one record per epoch.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .config import EngineConfig
from .functome import Functome
from .grid import TRANSMITTER, NeuralGrid
from .node import ProcessNode
from .runner import (Entity, EpochReport, InputProbe, OutputProbe,
                     rng_state_from_json, rng_state_to_json)

FORMAT_VERSION = 1


class SaveStateError(ValueError):
    """Unreadable, malformed or version-mismatched save state."""


def entity_to_dict(entity: Entity) -> dict:
    return {
        "config": entity.config.to_dict(),
        "entity_clock": entity.entity_clock,
        "next_node_id": entity.next_node_id,
        "next_functome_id": entity.next_functome_id,
        "grid": entity.grid.to_dict(),
        "functomes": [entity.functomes[fid].to_dict()
                      for fid in sorted(entity.functomes)],
        "nodes": [entity.nodes[nid].to_dict() for nid in sorted(entity.nodes)],
        "input_probes": [p.to_dict() for p in
                         sorted(entity.input_probes, key=lambda p: p.probe_id)],
        "output_probes": [p.to_dict() for p in
                          sorted(entity.output_probes, key=lambda p: p.probe_id)],
    }


def entity_from_dict(data: dict) -> Entity:
    config = EngineConfig.from_dict(data["config"])
    entity = Entity(config, rng=None)  # rng installed by the caller
    entity.entity_clock = int(data["entity_clock"])
    entity.next_node_id = int(data["next_node_id"])
    entity.next_functome_id = int(data["next_functome_id"])
    entity.grid = NeuralGrid.from_dict(data["grid"])
    for fd in data["functomes"]:
        functome = Functome.from_dict(fd)
        entity.functomes[functome.fid] = functome
    for nd in data["nodes"]:
        fid = int(nd["functome_id"])
        if fid not in entity.functomes:
            raise SaveStateError(f"node {nd['id']} references unknown functome {fid}")
        node = ProcessNode.from_dict(nd, entity.functomes[fid])
        entity.nodes[node.id] = node
    entity.input_probes = [InputProbe.from_dict(p) for p in data["input_probes"]]
    entity.output_probes = [OutputProbe.from_dict(p) for p in data["output_probes"]]
    return entity


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def save(entity: Entity, path: str) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "locked": entity.locked,
        "rng_state": rng_state_to_json(entity.rng),
        "entity": entity_to_dict(entity),
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(doc))
        fh.write("\n")
    os.replace(tmp, path)


def load(path: str) -> Entity:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise SaveStateError(f"save state not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SaveStateError(f"malformed save state {path}: {exc}") from exc
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise SaveStateError(
            f"save state {path} has format_version {version}, expected {FORMAT_VERSION}")
    try:
        entity = entity_from_dict(doc["entity"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SaveStateError):
            raise
        raise SaveStateError(f"invalid save state {path}: {exc}") from exc
    entity.rng = rng_state_from_json(doc["rng_state"])
    entity.locked = bool(doc["locked"])
    return entity


def lock(entity: Entity) -> None:
    """Freeze development: only Propagate runs, every Functome mutation disabled."""
    entity.locked = True
    for functome in entity.functomes.values():
        functome.locked = True


def unlock(entity: Entity) -> None:
    entity.locked = False
    for functome in entity.functomes.values():
        functome.locked = False


# -- session log -----------------------------------------------------------

def session_record(report: EpochReport, entity: Entity,
                   environment_events: Optional[list] = None) -> dict:
    """One TrainingSessionMetaData line: positions, goals, stability, events."""
    return {
        "epoch": report.epoch,
        "nodes": {
            str(nid): {
                "soma": [float(c) for c in entity.nodes[nid].soma_position],
                "terminals": [[float(c) for c in t.position]
                              for t in entity.nodes[nid].axon_terminals],
                "goal_z": (entity.nodes[nid].goal.z_index
                           if entity.nodes[nid].goal is not None else None),
                "stability": float(entity.nodes[nid].stability_index),
            }
            for nid in sorted(entity.nodes)
        },
        "spikes": {str(k): v for k, v in sorted(report.spikes.items())},
        "stability": {str(k): float(v) for k, v in sorted(report.stability.items())},
        "pruned": report.pruned,
        "born": report.born,
        "probe_readings": {str(k): float(v)
                           for k, v in sorted(report.probe_readings.items())},
        "state_classification": report.state_classification,
        "environment_events": environment_events or [],
    }


def append_session_record(log_path: str, report: EpochReport, entity: Entity,
                          environment_events: Optional[list] = None) -> None:
    record = session_record(report, entity, environment_events)
    with open(log_path, "a", encoding="utf-8") as fh:
        fh.write(dumps_canonical(record))
        fh.write("\n")


def read_session_log(log_path: str) -> list[dict]:
    records = []
    with open(log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


# -- environmental control rules ------------------------------------------

class RuleError(ValueError):
    """Malformed environment rule file."""


@dataclass
class EnvironmentControlRule:
    precondition: dict  # {"type": ..., params}
    effect: dict        # {"type": ..., params}
    repeating: bool = False
    fired: bool = False

    _PRE_TYPES = ("epoch_at_least", "probe_reading_at_least", "node_count_at_least")
    _EFFECT_TYPES = ("add_input_probe", "remove_input_probe", "deposit_payload")

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentControlRule":
        pre, eff = d.get("precondition"), d.get("effect")
        if not isinstance(pre, dict) or pre.get("type") not in cls._PRE_TYPES:
            raise RuleError(f"unknown precondition: {pre}")
        if not isinstance(eff, dict) or eff.get("type") not in cls._EFFECT_TYPES:
            raise RuleError(f"unknown effect: {eff}")
        return cls(precondition=pre, effect=eff, repeating=bool(d.get("repeating", False)))

    def holds(self, entity: Entity) -> bool:
        p = self.precondition
        kind = p["type"]
        if kind == "epoch_at_least":
            return entity.entity_clock >= p["epoch"]
        if kind == "node_count_at_least":
            return len(entity.nodes) >= p["count"]
        probe = next((op for op in entity.output_probes
                      if op.probe_id == p["probe_id"]), None)
        return bool(probe and probe.history and probe.history[-1] >= p["value"])

    def apply(self, entity: Entity) -> dict:
        e = self.effect
        kind = e["type"]
        if kind == "add_input_probe":
            spec = e["probe"]
            entity.input_probes.append(InputProbe(
                probe_id=int(spec["probe_id"]),
                position=tuple(float(c) for c in spec["position"]),
                frames=spec["frames"], cursor=int(spec.get("cursor", 0)),
                noise=float(spec.get("noise", 0.0))))
        elif kind == "remove_input_probe":
            entity.input_probes = [p for p in entity.input_probes
                                   if p.probe_id != e["probe_id"]]
        else:  # deposit_payload
            spec = e["payload"]
            entity.grid.deposit(entity.grid.new_payload(
                spec.get("kind", TRANSMITTER), int(spec["index"]),
                tuple(float(c) for c in spec["position"]),
                float(spec["magnitude"]), int(spec.get("ttl", entity.config.payload_ttl)),
                properties=dict(spec.get("properties", {}))))
            entity.grid.commit()
        return {"precondition": self.precondition, "effect": self.effect}


def load_rules(path: str) -> list[EnvironmentControlRule]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise RuleError("rules file must contain a JSON list")
    return [EnvironmentControlRule.from_dict(d) for d in data]


def apply_environment_rules(entity: Entity,
                            rules: list[EnvironmentControlRule]) -> list[dict]:
    """Fire every rule whose precondition holds; one-shot unless repeating."""
    fired = []
    for rule in rules:
        if rule.fired and not rule.repeating:
            continue
        if rule.holds(entity):
            fired.append(rule.apply(entity))
            rule.fired = True
    return fired
