"""Entity orchestration: the Propagate -> Evaluate & Prune -> Develop cycle.

An entity bundles the process nodes, the shared grid, probes and one seeded
RNG. Every epoch runs the three phases as global barriers; node processing is
always in ascending id order so a (seed, config, pattern) triple fully
determines the trajectory.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .cem import PwrTensor, SpikeEvent
from .config import EngineConfig
from .functome import (Functome, StructuralChange, execute_action, mutate,
                       random_gene, scan_available_actions)
from .grid import ARCHITECTOR, TRANSMITTER, NeuralGrid
from .node import AxonTerminal, Dendrite, GrowthCone, ProcessNode


def rng_state_to_json(rng: random.Random) -> list:
    version, internal, gauss = rng.getstate()
    return [version, list(internal), gauss]


def rng_state_from_json(state: list) -> random.Random:
    rng = random.Random()
    rng.setstate((state[0], tuple(state[1]), state[2]))
    return rng


@dataclass
class InputProbe:
    probe_id: int
    position: tuple[float, float, float]
    frames: list  # each frame: list of {"offset", "index", "magnitude", ...}
    cursor: int = 0
    noise: float = 0.0  # uniform relative jitter applied to magnitudes

    def to_dict(self) -> dict:
        return {"probe_id": self.probe_id, "position": [float(c) for c in self.position],
                "frames": self.frames, "cursor": self.cursor, "noise": float(self.noise)}

    @classmethod
    def from_dict(cls, d: dict) -> "InputProbe":
        return cls(probe_id=int(d["probe_id"]),
                   position=tuple(float(c) for c in d["position"]),
                   frames=d["frames"], cursor=int(d["cursor"]), noise=float(d["noise"]))


@dataclass
class OutputProbe:
    probe_id: int
    position: tuple[float, float, float]
    radius: float
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"probe_id": self.probe_id, "position": [float(c) for c in self.position],
                "radius": float(self.radius), "history": [float(h) for h in self.history]}

    @classmethod
    def from_dict(cls, d: dict) -> "OutputProbe":
        return cls(probe_id=int(d["probe_id"]),
                   position=tuple(float(c) for c in d["position"]),
                   radius=float(d["radius"]), history=list(d["history"]))


@dataclass
class EpochReport:
    epoch: int
    spikes: dict = field(default_factory=dict)          # node_id -> [spike dicts]
    stability: dict = field(default_factory=dict)       # node_id -> float
    pruned: list = field(default_factory=list)
    born: list = field(default_factory=list)
    payloads_deposited: int = 0
    payloads_consumed: int = 0
    payloads_expired: int = 0
    state_classification: dict = field(default_factory=dict)
    structural_changes: list = field(default_factory=list)
    probe_readings: dict = field(default_factory=dict)  # probe_id -> reading

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "spikes": {str(k): v for k, v in sorted(self.spikes.items())},
            "stability": {str(k): float(v) for k, v in sorted(self.stability.items())},
            "pruned": sorted(self.pruned),
            "born": sorted(self.born),
            "payloads_deposited": self.payloads_deposited,
            "payloads_consumed": self.payloads_consumed,
            "payloads_expired": self.payloads_expired,
            "state_classification": {str(k): v for k, v in
                                     sorted(self.state_classification.items())},
            "structural_changes": self.structural_changes,
            "probe_readings": {str(k): float(v) for k, v in
                               sorted(self.probe_readings.items())},
        }


class Entity:
    def __init__(self, config: EngineConfig, rng: random.Random):
        self.config = config
        self.rng = rng
        self.grid = NeuralGrid(config.bounds_min, config.bounds_max,
                               cell_size=config.grid_cell_size)
        self.nodes: dict[int, ProcessNode] = {}
        self.functomes: dict[int, Functome] = {}
        self.input_probes: list[InputProbe] = []
        self.output_probes: list[OutputProbe] = []
        self.entity_clock = 0
        self.locked = False
        self.next_node_id = 0
        self.next_functome_id = 0
        self._pending_neurogenesis: list[tuple[int, tuple[float, float, float]]] = []
        self._pending_apoptosis: list[int] = []

    # -- structural queues (consumed at the Develop commit) ----------------

    def queue_neurogenesis(self, parent: ProcessNode, offset) -> None:
        pos = self.grid.clamp(tuple(s + o for s, o in zip(parent.soma_position, offset)))
        self._pending_neurogenesis.append((parent.functome.fid, pos))

    def queue_apoptosis(self, node_id: int) -> None:
        self._pending_apoptosis.append(node_id)

    def allocate_node_id(self) -> int:
        nid = self.next_node_id
        self.next_node_id += 1
        return nid

    def allocate_functome_id(self) -> int:
        fid = self.next_functome_id
        self.next_functome_id += 1
        return fid


def _build_node(entity: Entity, functome: Functome, soma,
                dendrite_positions=None, terminal_positions=None) -> ProcessNode:
    """Construct a node with randomized CEM and neurites drawn from entity RNG."""
    cfg = entity.config
    rng = entity.rng
    cem = PwrTensor.random(cfg.dim_xy, cfg.dim_z, rng)
    node = ProcessNode(node_id=entity.allocate_node_id(), soma_position=soma,
                       cem=cem, min_e=cfg.min_e, dr=cfg.dr, functome=functome,
                       at_mod=cfg.at_mod)
    lo, hi = cfg.bounds_min, cfg.bounds_max

    def uniform_pos():
        return tuple(rng.uniform(a, b) for a, b in zip(lo, hi))

    for i in range(cfg.initial_dendrites):
        pos = dendrite_positions[i] if dendrite_positions else uniform_pos()
        idx = rng.randrange(cfg.num_transmitter_indices)
        node.dendrites.append(Dendrite(
            position=pos, pickup_radius=cfg.dendrite_pickup_radius,
            accepted_transmitter_indices={idx}, gain=cfg.dendrite_gain,
            growth_cone=GrowthCone(step_size=cfg.growth_step, attractant_index=idx)))
    for i in range(cfg.initial_axon_terminals):
        pos = terminal_positions[i] if terminal_positions else uniform_pos()
        idx = rng.randrange(cfg.num_transmitter_indices)
        node.axon_terminals.append(AxonTerminal(
            position=pos, emit_transmitter_index=idx, emit_magnitude=cfg.emit_magnitude,
            growth_cone=GrowthCone(step_size=cfg.growth_step, attractant_index=idx)))
    # seeded nodes may produce what their terminals emit; genes extend the set
    node.allowed_tx_indices = {t.emit_transmitter_index for t in node.axon_terminals}
    return node


def seed_entity(config: EngineConfig) -> Entity:
    """Random initial entity: nodes, neurites and one fresh Functome per node."""
    config.validate()
    entity = Entity(config, random.Random(config.seed))
    rng = entity.rng
    lo, hi = config.bounds_min, config.bounds_max
    for _ in range(config.initial_nodes):
        functome = Functome(fid=entity.allocate_functome_id(),
                            mutation_rate=config.mutation_rate)
        for _ in range(config.initial_genes):
            functome.genes.append(random_gene(
                rng, config.num_transmitter_indices, config.num_architector_indices))
        entity.functomes[functome.fid] = functome
        soma = tuple(rng.uniform(a, b) for a, b in zip(lo, hi))
        node = _build_node(entity, functome, soma)
        functome.metadata["seed_positions"] = {
            "soma": [float(c) for c in soma],
            "dendrites": [list(d.position) for d in node.dendrites],
            "axon_terminals": [list(t.position) for t in node.axon_terminals],
        }
        entity.nodes[node.id] = node
    return entity


# -- phases ----------------------------------------------------------------

def propagate_phase(entity: Entity) -> dict[int, list[SpikeEvent]]:
    """Probe deposits, node stepping against the frozen grid, probe readings."""
    cfg = entity.config
    rng = entity.rng
    epoch = entity.entity_clock
    for nid in sorted(entity.nodes):
        entity.nodes[nid].begin_epoch()

    for probe in sorted(entity.input_probes, key=lambda p: p.probe_id):
        if not probe.frames:
            continue
        frame = probe.frames[probe.cursor]
        probe.cursor = (probe.cursor + 1) % len(probe.frames)
        for item in frame:
            pos = entity.grid.clamp(tuple(
                c + o for c, o in zip(probe.position, item["offset"])))
            mag = float(item["magnitude"])
            if probe.noise > 0:
                mag *= 1.0 + rng.uniform(-probe.noise, probe.noise)
            if mag <= 0:
                continue
            props = {"excitatory": int(item.get("excitatory", 1))}
            entity.grid.deposit(entity.grid.new_payload(
                TRANSMITTER, int(item["index"]), pos, mag, cfg.payload_ttl, props))
    entity.grid.commit()

    claimed: set[int] = set()
    spikes: dict[int, list[SpikeEvent]] = {}
    for nid in sorted(entity.nodes):
        node = entity.nodes[nid]
        deposits, consumed = node.collect_inputs(entity.grid, claimed)
        for pid in consumed:
            entity.grid.remove(pid)
        spike = node.step(deposits, rng, epoch, cfg.learning_rate,
                          cfg.goal_refresh_threshold)
        if spike is not None:
            spikes.setdefault(nid, []).append(spike)
            for pl in node.emit_payloads(spike, entity.grid, rng,
                                         cfg.architector_sigma, cfg.payload_ttl):
                entity.grid.deposit(pl)
    entity.grid.commit()

    for probe in sorted(entity.output_probes, key=lambda p: p.probe_id):
        reading = 0.0
        for nid in sorted(spikes):
            node = entity.nodes[nid]
            in_range = any(
                sum((a - b) ** 2 for a, b in zip(t.position, probe.position))
                <= probe.radius ** 2 for t in node.axon_terminals)
            if in_range:
                reading += sum(s.plane_energy for s in spikes[nid])
        probe.history.append(reading)
    return spikes


def evaluate_prune_phase(entity: Entity, stability_prune_threshold: float
                         ) -> tuple[list[int], dict[int, str]]:
    """Rotate distributions and prune unstable nodes; unstimulated are exempt."""
    pruned: list[int] = []
    classifications: dict[int, str] = {}
    for nid in sorted(entity.nodes):
        node = entity.nodes[nid]
        if not node.stimulated_this_epoch:
            continue
        si = node.finalize_distribution()
        classifications[nid] = node.classify_state(node.inputs_this_epoch)
        if si < stability_prune_threshold:
            pruned.append(nid)
    for nid in pruned:
        del entity.nodes[nid]
    return pruned, classifications


def develop_phase(entity: Entity) -> tuple[list[StructuralChange], list[int]]:
    """Express firing genes, apply architectors, grow, mutate, commit births/deaths."""
    cfg = entity.config
    rng = entity.rng
    changes: list[StructuralChange] = []
    for nid in sorted(entity.nodes):
        node = entity.nodes[nid]
        for gene in scan_available_actions(node, entity.grid, entity.entity_clock,
                                           cfg.action_scan_radius):
            changes.append(execute_action(gene, node, entity, rng))
        for pl in entity.grid.query_radius(node.soma_position, cfg.action_scan_radius):
            if pl.kind != ARCHITECTOR:
                continue
            target = pl.properties.get("target_action")
            gene = next((g for g in node.functome.genes
                         if g.enabled and g.action == target), None)
            if gene is not None:
                changes.append(execute_action(gene, node, entity, rng))
        node.grow(entity.grid, cfg.gradient_sigma)

        functome = node.functome
        if (not functome.locked and node.stability_index < cfg.stability_min):
            shared = sum(1 for other in entity.nodes.values()
                         if other.functome.fid == functome.fid)
            if shared > 1:
                # clone-on-mutate: shared genomes stay intact for siblings
                functome = functome.clone(entity.allocate_functome_id())
                entity.functomes[functome.fid] = functome
                node.functome = functome
        mutate(functome, node.stability_index, cfg.stability_min, rng,
               cfg.num_transmitter_indices, cfg.num_architector_indices)

    born: list[int] = []
    for fid, pos in entity._pending_neurogenesis:
        if len(entity.nodes) >= cfg.max_nodes:
            break
        functome = entity.functomes[fid]
        node = _build_node(entity, functome, pos)
        entity.nodes[node.id] = node
        born.append(node.id)
    entity._pending_neurogenesis.clear()
    for nid in entity._pending_apoptosis:
        entity.nodes.pop(nid, None)
    entity._pending_apoptosis.clear()

    entity.grid.decay_and_expire(cfg.payload_decay, cfg.epsilon_magnitude)
    return changes, born


def run_epoch(entity: Entity) -> EpochReport:
    """Execute one full epoch (or Propagate only when locked) and report it."""
    existing = sorted(entity.nodes)
    spikes = propagate_phase(entity)
    if entity.locked:
        pruned, classifications = [], {}
        changes, born = [], []
    else:
        pruned, classifications = evaluate_prune_phase(
            entity, entity.config.stability_prune_threshold)
        changes, born = develop_phase(entity)

    for nid in existing:
        node = entity.nodes.get(nid)
        if node is not None:
            node.end_epoch_housekeeping(entity.rng)

    deposited, consumed, expired = entity.grid.reset_epoch_counters()
    report = EpochReport(epoch=entity.entity_clock)
    report.spikes = {nid: [s.to_dict() for s in evs] for nid, evs in spikes.items()}
    report.stability = {nid: entity.nodes[nid].stability_index
                        for nid in sorted(entity.nodes)}
    report.pruned = pruned
    report.born = born
    report.payloads_deposited = deposited
    report.payloads_consumed = consumed
    report.payloads_expired = expired
    report.state_classification = classifications
    report.structural_changes = [c.to_dict() for c in changes]
    report.probe_readings = {p.probe_id: (p.history[-1] if p.history else 0.0)
                             for p in entity.output_probes}
    entity.entity_clock += 1
    return report
