"""Process node: soma, neurites, CEM drive, spike statistics and growth.

A node collects transmitter payloads through its dendrites, feeds them to its
CEM as entry-plane deposits, and on spike reinforces routers, tunes weights
toward its goal plane and releases payloads from its axon terminals. Survival
is scored by the stability index: the inverse (clamped) KL divergence between
consecutive per-epoch spike distributions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cem import GoalPlane, PwrTensor, SpikeEvent, StructureError
from .grid import ARCHITECTOR, TRANSMITTER, NeuralGrid, TransArchPayload

log = logging.getLogger(__name__)

GENERATION = "Generation"
DISCRIMINATION = "Discrimination"
NEUTRAL = "Neutral"

BASELINE_ALPHA = 0.1   # EMA rate for the per-epoch accepted-input baseline
SPIKE_STATS_ALPHA = 0.1  # EMA rate for rolling spike-count mean/variance


@dataclass
class GrowthCone:
    step_size: float = 0.25
    active: bool = True
    attractant_index: int = 0

    def to_dict(self) -> dict:
        return {"step_size": float(self.step_size), "active": self.active,
                "attractant_index": self.attractant_index}

    @classmethod
    def from_dict(cls, d: dict) -> "GrowthCone":
        return cls(step_size=float(d["step_size"]), active=bool(d["active"]),
                   attractant_index=int(d["attractant_index"]))


@dataclass
class Dendrite:
    position: tuple[float, float, float]
    pickup_radius: float
    accepted_transmitter_indices: set[int]
    gain: float = 1.0
    growth_cone: GrowthCone = field(default_factory=GrowthCone)

    def __post_init__(self):
        if not self.accepted_transmitter_indices:
            raise StructureError("a dendrite must accept at least one transmitter index")

    def to_dict(self) -> dict:
        return {"position": [float(c) for c in self.position],
                "pickup_radius": float(self.pickup_radius),
                "accepted": sorted(self.accepted_transmitter_indices),
                "gain": float(self.gain),
                "growth_cone": self.growth_cone.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Dendrite":
        return cls(position=tuple(float(c) for c in d["position"]),
                   pickup_radius=float(d["pickup_radius"]),
                   accepted_transmitter_indices=set(int(i) for i in d["accepted"]),
                   gain=float(d["gain"]),
                   growth_cone=GrowthCone.from_dict(d["growth_cone"]))


@dataclass
class AxonTerminal:
    position: tuple[float, float, float]
    emit_transmitter_index: int
    emit_magnitude: float
    growth_cone: GrowthCone = field(default_factory=GrowthCone)

    def __post_init__(self):
        if self.emit_magnitude <= 0:
            raise StructureError("axon terminal emit_magnitude must be > 0")

    def to_dict(self) -> dict:
        return {"position": [float(c) for c in self.position],
                "emit_index": self.emit_transmitter_index,
                "emit_magnitude": float(self.emit_magnitude),
                "growth_cone": self.growth_cone.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "AxonTerminal":
        return cls(position=tuple(float(c) for c in d["position"]),
                   emit_transmitter_index=int(d["emit_index"]),
                   emit_magnitude=float(d["emit_magnitude"]),
                   growth_cone=GrowthCone.from_dict(d["growth_cone"]))


class SpikeDistribution:
    """Per-epoch histogram of spiking z-plane indices.

    Raw counts are kept; add-one smoothing is applied when the histogram is
    read as a probability vector so every bin stays strictly positive.
    """

    def __init__(self, num_bins: int, counts=None):
        self.counts = np.zeros(num_bins, dtype=np.int64) if counts is None \
            else np.asarray(counts, dtype=np.int64)

    def record(self, z_index: int) -> None:
        self.counts[z_index] += 1

    def reset(self) -> None:
        self.counts.fill(0)

    def as_probabilities(self) -> np.ndarray:
        smoothed = self.counts.astype(np.float64) + 1.0
        return smoothed / smoothed.sum()

    def copy(self) -> "SpikeDistribution":
        return SpikeDistribution(len(self.counts), counts=self.counts.copy())


def stability_index(prev: SpikeDistribution, curr: SpikeDistribution) -> float:
    """1 / max(KL(prev || curr), 1); always in (0, 1]."""
    if len(prev.counts) != len(curr.counts):
        raise StructureError("spike distributions have mismatched bin counts")
    p = prev.as_probabilities()
    q = curr.as_probabilities()
    kl = float(np.sum(p * np.log(p / q)))
    return 1.0 / max(kl, 1.0)


class ProcessNode:
    def __init__(self, node_id: int, soma_position, cem: PwrTensor,
                 min_e: float, dr: float, functome, at_mod: float = 1.0):
        self.id = node_id
        self.soma_position = tuple(float(c) for c in soma_position)
        self.cem = cem
        self.min_e = float(min_e)
        self.dr = float(dr)
        self.at_mod = float(at_mod)
        self.functome = functome
        self.dendrites: list[Dendrite] = []
        self.axon_terminals: list[AxonTerminal] = []
        self.goal: Optional[GoalPlane] = None
        self.spike_dist_prev = SpikeDistribution(cem.dim_z)
        self.spike_dist_curr = SpikeDistribution(cem.dim_z)
        self.stability_index = 1.0
        self.prev_stability_index = 1.0
        self.node_clock = 0
        self.stimulated_this_epoch = False
        self.baseline_input_count = 0.0
        self.baseline_initialized = False
        self.allowed_tx_indices: set[int] = set()
        self.allowed_arch_indices: dict[int, str] = {}  # index -> target action
        # rolling spike-count statistics (architector release gate)
        self.spike_mean = 0.0
        self.spike_var = 0.0
        self.spike_epochs_observed = 0
        # per-epoch state
        self.spike_count_epoch = 0
        self.inputs_this_epoch = 0
        self.spiked_at_goal_this_epoch = False

    @property
    def functome_id(self) -> int:
        return self.functome.fid

    # -- epoch lifecycle ---------------------------------------------------

    def begin_epoch(self) -> None:
        self.stimulated_this_epoch = False
        self.spike_count_epoch = 0
        self.inputs_this_epoch = 0
        self.spiked_at_goal_this_epoch = False

    def end_epoch_housekeeping(self, rng) -> None:
        """CEM epoch-end: randomize routers of stale residual energy, clear it."""
        if self.spike_count_epoch == 0:
            self.cem.randomize_stale_routers(rng)
        self.cem.reset_propagation()
        a = SPIKE_STATS_ALPHA
        x = float(self.spike_count_epoch)
        if self.spike_epochs_observed == 0:
            self.spike_mean = x
            self.spike_var = 0.0
        else:
            delta = x - self.spike_mean
            self.spike_mean += a * delta
            self.spike_var = (1.0 - a) * (self.spike_var + a * delta * delta)
        self.spike_epochs_observed += 1
        self.node_clock += 1

    # -- propagate phase ---------------------------------------------------

    def entry_cell(self, dendrite_ordinal: int) -> tuple[int, int]:
        n = self.cem.dim_xy
        if dendrite_ordinal >= n * n:
            raise StructureError(
                f"dendrite ordinal {dendrite_ordinal} exceeds {n}x{n} entry plane")
        return dendrite_ordinal % n, dendrite_ordinal // n

    def collect_inputs(self, grid: NeuralGrid, claimed: set[int]
                       ) -> tuple[list[tuple[int, int, float]], list[int]]:
        """Gather accepted transmitter payloads into entry-plane deposits.

        ``claimed`` is shared across nodes within the phase so no payload is
        consumed twice. Mismatched indices block the payload for this dendrite.
        """
        deposits: list[tuple[int, int, float]] = []
        consumed: list[int] = []
        for ordinal, dendrite in enumerate(self.dendrites):
            x, y = self.entry_cell(ordinal)
            for pl in grid.query_radius(dendrite.position, dendrite.pickup_radius):
                if pl.kind != TRANSMITTER or pl.pid in claimed:
                    continue
                if pl.index not in dendrite.accepted_transmitter_indices:
                    continue
                sign = 1.0 if float(pl.properties.get("excitatory", 1)) >= 0 else -1.0
                mag = pl.magnitude * dendrite.gain * sign
                deposits.append((x, y, mag))
                claimed.add(pl.pid)
                consumed.append(pl.pid)
        self.inputs_this_epoch += len(consumed)
        if any(mag != 0.0 for _, _, mag in deposits):
            self.stimulated_this_epoch = True
        return deposits, consumed

    def step(self, deposits, rng, epoch: int, learning_rate: float,
             goal_refresh_threshold: float) -> Optional[SpikeEvent]:
        """One CEM pass; on spike run the full reinforcement sequence."""
        spike = self.cem.forward_propagate(deposits, self.min_e, self.dr, self.at_mod)
        if spike is None:
            return None
        spike.epoch = epoch
        spike.node_id = self.id
        self.spike_dist_curr.record(spike.z_index)
        self.spike_count_epoch += 1
        self.cem.update_routers_on_spike(spike)
        self.update_goal(spike, goal_refresh_threshold)
        if self.goal is not None and self.goal.z_index == spike.z_index:
            self.spiked_at_goal_this_epoch = True
            self.cem.backprop_to_goal(self.goal, self.cem.last_trace,
                                      learning_rate, self.dr)
        self.cem.reset_propagation()
        return spike

    def update_goal(self, spike: SpikeEvent, refresh_threshold: float) -> None:
        """Create the goal on first spike; replace it only while unstable."""
        if self.goal is None or self.stability_index < refresh_threshold:
            self.goal = GoalPlane(z_index=spike.z_index,
                                  target_p=self.cem.p[:, :, spike.z_index].copy())

    def emit_payloads(self, spike: SpikeEvent, grid: NeuralGrid, rng,
                      architector_sigma: float, ttl: int) -> list[TransArchPayload]:
        """Transmitters per terminal; architectors when spiking leaves the average."""
        out: list[TransArchPayload] = []
        release_arch = False
        if self.spike_epochs_observed >= 2:
            std = math.sqrt(max(self.spike_var, 0.0))
            if std > 1e-12 and abs(self.spike_count_epoch - self.spike_mean) > architector_sigma * std:
                release_arch = True
        for terminal in self.axon_terminals:
            idx = terminal.emit_transmitter_index
            if idx not in self.allowed_tx_indices:
                log.warning("node %d: transmitter index %d not allowed by Functome; skipped",
                            self.id, idx)
                continue
            mag = terminal.emit_magnitude * (spike.plane_energy / self.min_e)
            out.append(grid.new_payload(
                TRANSMITTER, idx, grid.clamp(terminal.position), mag, ttl,
                properties={"excitatory": 1}))
            if release_arch and self.allowed_arch_indices:
                arch_idx = min(self.allowed_arch_indices)
                out.append(grid.new_payload(
                    ARCHITECTOR, arch_idx, grid.clamp(terminal.position), mag, ttl,
                    properties={"target_action": self.allowed_arch_indices[arch_idx]}))
        return out

    # -- evaluate phase ----------------------------------------------------

    def finalize_distribution(self) -> float:
        """Rotate spike distributions and recompute the stability index."""
        self.prev_stability_index = self.stability_index
        self.stability_index = stability_index(self.spike_dist_prev, self.spike_dist_curr)
        self.spike_dist_prev = self.spike_dist_curr.copy()
        self.spike_dist_curr.reset()
        return self.stability_index

    def classify_state(self, inputs_this_epoch: int) -> str:
        """Generation / Discrimination / Neutral relative to the input baseline."""
        if not self.baseline_initialized:
            self.baseline_input_count = float(inputs_this_epoch)
            self.baseline_initialized = True
            return NEUTRAL
        baseline = self.baseline_input_count
        if self.spiked_at_goal_this_epoch and inputs_this_epoch < baseline:
            state = GENERATION
        elif inputs_this_epoch > baseline and self.stability_index <= self.prev_stability_index:
            state = DISCRIMINATION
        else:
            state = NEUTRAL
        self.baseline_input_count += BASELINE_ALPHA * (inputs_this_epoch - baseline)
        return state

    # -- develop phase -----------------------------------------------------

    def grow(self, grid: NeuralGrid, sigma: float) -> int:
        """Move each active growth cone up its attractant density gradient."""
        moved = 0
        terminals = [(d.position, d.growth_cone, d) for d in self.dendrites]
        terminals += [(t.position, t.growth_cone, t) for t in self.axon_terminals]
        for pos, cone, owner in terminals:
            if not cone.active or cone.step_size <= 0:
                continue
            g = grid.density_gradient(pos, cone.attractant_index, sigma)
            norm = math.sqrt(sum(c * c for c in g))
            if norm <= 1e-12:
                continue
            new_pos = tuple(c + cone.step_size * gc / norm for c, gc in zip(pos, g))
            owner.position = grid.clamp(new_pos)
            moved += 1
        return moved

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "soma_position": [float(c) for c in self.soma_position],
            "cem": self.cem.to_dict(),
            "min_e": self.min_e,
            "dr": self.dr,
            "at_mod": self.at_mod,
            "functome_id": self.functome.fid,
            "dendrites": [d.to_dict() for d in self.dendrites],
            "axon_terminals": [t.to_dict() for t in self.axon_terminals],
            "goal": self.goal.to_dict() if self.goal is not None else None,
            "spike_dist_prev": self.spike_dist_prev.counts.tolist(),
            "spike_dist_curr": self.spike_dist_curr.counts.tolist(),
            "stability_index": float(self.stability_index),
            "prev_stability_index": float(self.prev_stability_index),
            "node_clock": self.node_clock,
            "stimulated_this_epoch": self.stimulated_this_epoch,
            "baseline_input_count": float(self.baseline_input_count),
            "baseline_initialized": self.baseline_initialized,
            "allowed_tx_indices": sorted(self.allowed_tx_indices),
            "allowed_arch_indices": {str(k): v for k, v in
                                     sorted(self.allowed_arch_indices.items())},
            "spike_mean": float(self.spike_mean),
            "spike_var": float(self.spike_var),
            "spike_epochs_observed": self.spike_epochs_observed,
            "spike_count_epoch": self.spike_count_epoch,
            "inputs_this_epoch": self.inputs_this_epoch,
            "spiked_at_goal_this_epoch": self.spiked_at_goal_this_epoch,
        }

    @classmethod
    def from_dict(cls, d: dict, functome) -> "ProcessNode":
        node = cls(node_id=int(d["id"]), soma_position=d["soma_position"],
                   cem=PwrTensor.from_dict(d["cem"]), min_e=float(d["min_e"]),
                   dr=float(d["dr"]), functome=functome, at_mod=float(d["at_mod"]))
        node.dendrites = [Dendrite.from_dict(x) for x in d["dendrites"]]
        node.axon_terminals = [AxonTerminal.from_dict(x) for x in d["axon_terminals"]]
        node.goal = GoalPlane.from_dict(d["goal"]) if d["goal"] is not None else None
        node.spike_dist_prev = SpikeDistribution(node.cem.dim_z, counts=d["spike_dist_prev"])
        node.spike_dist_curr = SpikeDistribution(node.cem.dim_z, counts=d["spike_dist_curr"])
        node.stability_index = float(d["stability_index"])
        node.prev_stability_index = float(d["prev_stability_index"])
        node.node_clock = int(d["node_clock"])
        node.stimulated_this_epoch = bool(d["stimulated_this_epoch"])
        node.baseline_input_count = float(d["baseline_input_count"])
        node.baseline_initialized = bool(d["baseline_initialized"])
        node.allowed_tx_indices = set(int(i) for i in d["allowed_tx_indices"])
        node.allowed_arch_indices = {int(k): v for k, v in d["allowed_arch_indices"].items()}
        node.spike_mean = float(d["spike_mean"])
        node.spike_var = float(d["spike_var"])
        node.spike_epochs_observed = int(d["spike_epochs_observed"])
        node.spike_count_epoch = int(d["spike_count_epoch"])
        node.inputs_this_epoch = int(d["inputs_this_epoch"])
        node.spiked_at_goal_this_epoch = bool(d["spiked_at_goal_this_epoch"])
        return node
