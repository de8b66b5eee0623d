"""The genetic record: action genes, prerequisites, mutation and hashing.

Action and prerequisite vocabularies are closed; serialized genes carry the
exact canonical strings (including the historical spelling "Dentrite_*") and
anything else is a load error.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

ACTIONS = (
    "AxonTerminal_AddNew",
    "AxonTerminal_RemoveRandom",
    "Dentrite_AllowNew",
    "Dentrite_RemoveRandom",
    "AllowTransmitterIndexProduction",
    "AddArchitectorIndexProduction",
    "StimulateNeuroGenesis",
    "Apoptosis",
)

PREREQUISITES = (
    "ArchitectorPresent",
    "TransmitterPresent",
    "ArchitectorPresentPayloadCount",
    "TransmitterPresentPayloadCount",
    "AllowOn_ProcessNodeClockRange",
    "AllowOn_ClockFrequency",
    "EnergyRequirement",
    "EnabledAfterEntityClock",
)

# Param keys each prerequisite needs to evaluate.
PREREQ_PARAM_KEYS = {
    "ArchitectorPresent": ("index",),
    "TransmitterPresent": ("index",),
    "ArchitectorPresentPayloadCount": ("index", "min_count"),
    "TransmitterPresentPayloadCount": ("index", "min_count"),
    "AllowOn_ProcessNodeClockRange": ("min_clock", "max_clock"),
    "AllowOn_ClockFrequency": ("min_spikes", "max_spikes"),
    "EnergyRequirement": ("min_energy",),
    "EnabledAfterEntityClock": ("entity_clock",),
}

# Param keys each action consumes when it fires.
ACTION_PARAM_KEYS = {
    "AxonTerminal_AddNew": ("emit_index",),
    "AxonTerminal_RemoveRandom": (),
    "Dentrite_AllowNew": ("accept_index",),
    "Dentrite_RemoveRandom": (),
    "AllowTransmitterIndexProduction": ("produce_index",),
    "AddArchitectorIndexProduction": ("produce_index", "target_action"),
    "StimulateNeuroGenesis": (),
    "Apoptosis": (),
}


class GeneError(ValueError):
    """Unknown action/prerequisite name or malformed gene record."""


@dataclass
class ActionGene:
    action: str
    prerequisite: str
    params: dict = field(default_factory=dict)
    enabled: bool = True

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise GeneError(f"unknown action name: {self.action!r}")
        if self.prerequisite not in PREREQUISITES:
            raise GeneError(f"unknown prerequisite name: {self.prerequisite!r}")

    def required_keys(self) -> tuple[str, ...]:
        return PREREQ_PARAM_KEYS[self.prerequisite] + ACTION_PARAM_KEYS[self.action]

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "prerequisite": self.prerequisite,
            "params": dict(sorted(self.params.items())),
            "enabled": self.enabled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ActionGene":
        return cls(action=d["action"], prerequisite=d["prerequisite"],
                   params=dict(d["params"]), enabled=bool(d["enabled"]))


@dataclass
class Functome:
    fid: int
    genes: list[ActionGene] = field(default_factory=list)
    mutation_rate: float = 0.1
    locked: bool = False
    lineage: list[int] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fid": self.fid,
            "genes": [g.to_dict() for g in self.genes],
            "mutation_rate": float(self.mutation_rate),
            "locked": self.locked,
            "lineage": list(self.lineage),
            "metadata": dict(sorted(self.metadata.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Functome":
        return cls(fid=int(d["fid"]),
                   genes=[ActionGene.from_dict(g) for g in d["genes"]],
                   mutation_rate=float(d["mutation_rate"]), locked=bool(d["locked"]),
                   lineage=[int(x) for x in d["lineage"]], metadata=dict(d["metadata"]))

    def clone(self, new_fid: int) -> "Functome":
        c = Functome.from_dict(self.to_dict())
        c.fid = new_fid
        c.lineage = self.lineage + [self.fid]
        return c


# -- gene generation -------------------------------------------------------

def _random_param(key: str, rng, num_tx: int, num_arch: int):
    if key in ("index", "accept_index", "emit_index"):
        return rng.randrange(num_tx)
    if key == "produce_index":
        return rng.randrange(num_arch)
    if key == "target_action":
        return rng.choice(ACTIONS)
    if key == "min_count":
        return rng.randint(1, 5)
    if key == "min_clock":
        return rng.randint(0, 20)
    if key == "max_clock":
        return rng.randint(20, 100)
    if key == "min_spikes":
        return rng.randint(0, 2)
    if key == "max_spikes":
        return rng.randint(2, 10)
    if key == "min_energy":
        return round(rng.uniform(0.0, 5.0), 6)
    if key == "entity_clock":
        return rng.randint(0, 50)
    raise GeneError(f"no generator for param key {key!r}")


def random_gene(rng, num_tx: int, num_arch: int) -> ActionGene:
    gene = ActionGene(action=rng.choice(ACTIONS), prerequisite=rng.choice(PREREQUISITES))
    for key in gene.required_keys():
        gene.params[key] = _random_param(key, rng, num_tx, num_arch)
    return gene


def _fill_missing_params(gene: ActionGene, rng, num_tx: int, num_arch: int) -> None:
    for key in gene.required_keys():
        if key not in gene.params:
            gene.params[key] = _random_param(key, rng, num_tx, num_arch)


# -- prerequisite evaluation ----------------------------------------------

def check_prerequisite(gene: ActionGene, node, grid, entity_clock: int,
                       scan_radius: float) -> bool:
    """Evaluate a gene's prerequisite against committed state.

    Missing param keys make the gene permanently inert (logged once).
    """
    missing = [k for k in PREREQ_PARAM_KEYS[gene.prerequisite] if k not in gene.params]
    if missing:
        if not gene.params.get("_invalid_logged"):
            log.warning("gene %s/%s missing params %s; will never fire",
                        gene.action, gene.prerequisite, missing)
            gene.params["_invalid_logged"] = 1
        return False
    p = gene.params
    pre = gene.prerequisite
    if pre == "EnabledAfterEntityClock":
        return entity_clock >= p["entity_clock"]
    if pre == "AllowOn_ProcessNodeClockRange":
        return p["min_clock"] <= node.node_clock <= p["max_clock"]
    if pre == "AllowOn_ClockFrequency":
        return p["min_spikes"] <= node.spike_count_epoch <= p["max_spikes"]
    if pre == "EnergyRequirement":
        return float(node.cem.p.sum()) >= p["min_energy"]
    kind = "architector" if pre.startswith("Architector") else "transmitter"
    nearby = [pl for pl in grid.query_radius(node.soma_position, scan_radius)
              if pl.kind == kind and pl.index == p["index"]]
    if pre.endswith("PayloadCount"):
        return len(nearby) >= p["min_count"]
    return len(nearby) > 0


def scan_available_actions(node, grid, entity_clock: int, scan_radius: float) -> list[ActionGene]:
    """Enabled genes whose prerequisites pass, in declaration order."""
    functome = node.functome
    return [g for g in functome.genes
            if g.enabled and check_prerequisite(g, node, grid, entity_clock, scan_radius)]


# -- mutation --------------------------------------------------------------

_MUTABLE_FIELDS = ("action", "prerequisite", "param", "enabled")


def mutate(functome: Functome, node_stability: float, stability_min: float,
           rng, num_tx: int = 8, num_arch: int = 4) -> int:
    """Single-field redraw per selected gene, gated on instability and the lock."""
    if functome.locked or node_stability >= stability_min:
        return 0
    count = 0
    for gene in functome.genes:
        if rng.random() >= functome.mutation_rate:
            continue
        which = rng.choice(_MUTABLE_FIELDS)
        if which == "action":
            gene.action = rng.choice(ACTIONS)
            _fill_missing_params(gene, rng, num_tx, num_arch)
        elif which == "prerequisite":
            gene.prerequisite = rng.choice(PREREQUISITES)
            _fill_missing_params(gene, rng, num_tx, num_arch)
        elif which == "param":
            keys = sorted(k for k in gene.params if not k.startswith("_"))
            if keys:
                key = rng.choice(keys)
                gene.params[key] = _random_param(key, rng, num_tx, num_arch)
        else:
            gene.enabled = not gene.enabled
        count += 1
    return count


# -- hashing ---------------------------------------------------------------

def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def functome_hash(functome: Functome) -> str:
    return _digest([g.to_dict() for g in functome.genes])


def node_hash(node) -> str:
    """Digest over morphology and the enabled action set of a process node."""
    return _digest({
        "cem_dims": [node.cem.dim_xy, node.cem.dim_z],
        "dendrites": [d.to_dict() for d in node.dendrites],
        "axon_terminals": [t.to_dict() for t in node.axon_terminals],
        "enabled_actions": sorted(
            g.action for g in node.functome.genes if g.enabled),
        "allowed_tx": sorted(node.allowed_tx_indices),
        "allowed_arch": sorted(node.allowed_arch_indices),
    })


# -- action execution ------------------------------------------------------

@dataclass
class StructuralChange:
    """Record of one applied (or refused) morphology/production change."""

    action: str
    node_id: int
    ok: bool
    detail: str = ""

    def to_dict(self) -> dict:
        return {"action": self.action, "node_id": self.node_id,
                "ok": self.ok, "detail": self.detail}


def _unit_offset(rng, radius: float) -> tuple[float, float, float]:
    v = [rng.gauss(0.0, 1.0) for _ in range(3)]
    norm = math.sqrt(sum(c * c for c in v)) or 1.0
    return tuple(radius * c / norm for c in v)


def execute_action(gene: ActionGene, node, entity, rng) -> StructuralChange:
    """Apply exactly one structural/production change to the node or entity."""
    from .node import AxonTerminal, Dendrite, GrowthCone

    cfg = entity.config
    action = gene.action

    def change(ok: bool, detail: str) -> StructuralChange:
        return StructuralChange(action=action, node_id=node.id, ok=ok, detail=detail)

    if action == "AxonTerminal_AddNew":
        pos = entity.grid.clamp(tuple(
            s + o for s, o in zip(node.soma_position, _unit_offset(rng, cfg.spawn_radius))))
        idx = int(gene.params.get("emit_index", 0)) % cfg.num_transmitter_indices
        node.axon_terminals.append(AxonTerminal(
            position=pos, emit_transmitter_index=idx, emit_magnitude=cfg.emit_magnitude,
            growth_cone=GrowthCone(step_size=cfg.growth_step, attractant_index=idx)))
        return change(True, f"terminal added at {pos} emitting index {idx}")

    if action == "AxonTerminal_RemoveRandom":
        if not node.axon_terminals:
            return change(False, "no axon terminals to remove")
        node.axon_terminals.pop(rng.randrange(len(node.axon_terminals)))
        return change(True, "terminal removed")

    if action == "Dentrite_AllowNew":
        limit = node.cem.dim_xy * node.cem.dim_xy
        if len(node.dendrites) >= limit:
            return change(False, f"dendrite limit {limit} reached")
        pos = entity.grid.clamp(tuple(
            s + o for s, o in zip(node.soma_position, _unit_offset(rng, cfg.spawn_radius))))
        idx = int(gene.params.get("accept_index", 0)) % cfg.num_transmitter_indices
        node.dendrites.append(Dendrite(
            position=pos, pickup_radius=cfg.dendrite_pickup_radius,
            accepted_transmitter_indices={idx}, gain=cfg.dendrite_gain,
            growth_cone=GrowthCone(step_size=cfg.growth_step, attractant_index=idx)))
        return change(True, f"dendrite added at {pos} accepting index {idx}")

    if action == "Dentrite_RemoveRandom":
        if not node.dendrites:
            return change(False, "no dendrites to remove")
        node.dendrites.pop(rng.randrange(len(node.dendrites)))
        return change(True, "dendrite removed")

    if action == "AllowTransmitterIndexProduction":
        idx = int(gene.params.get("produce_index", 0)) % cfg.num_transmitter_indices
        node.allowed_tx_indices.add(idx)
        return change(True, f"transmitter index {idx} production allowed")

    if action == "AddArchitectorIndexProduction":
        idx = int(gene.params.get("produce_index", 0)) % cfg.num_architector_indices
        target = str(gene.params.get("target_action", ACTIONS[0]))
        node.allowed_arch_indices[idx] = target
        return change(True, f"architector index {idx} -> {target} production added")

    if action == "StimulateNeuroGenesis":
        offset = _unit_offset(rng, cfg.spawn_radius)
        entity.queue_neurogenesis(node, offset)
        return change(True, "neurogenesis queued")

    if action == "Apoptosis":
        entity.queue_apoptosis(node.id)
        return change(True, "apoptosis queued")

    raise GeneError(f"unknown action name: {action!r}")
