"""Engine configuration: every tunable the simulation reads, validated up front."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields


class ConfigError(ValueError):
    """Raised with the full list of violations, not just the first one."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid configuration: " + "; ".join(violations))


@dataclass
class EngineConfig:
    # CEM tensor geometry and dynamics
    dim_xy: int = 4
    dim_z: int = 8
    min_e: float = 2.0
    dr: float = 0.05
    at_mod: float = 1.0
    learning_rate: float = 0.05

    # stability / genetics thresholds
    stability_prune_threshold: float = 0.1
    stability_min: float = 0.2          # mutation fires only below this
    goal_refresh_threshold: float = 0.5
    architector_sigma: float = 2.0
    mutation_rate: float = 0.1

    # entity seeding
    initial_nodes: int = 5
    initial_genes: int = 4
    initial_dendrites: int = 2
    initial_axon_terminals: int = 2
    dendrite_pickup_radius: float = 1.5
    dendrite_gain: float = 1.0
    emit_magnitude: float = 1.0
    num_transmitter_indices: int = 8
    num_architector_indices: int = 4

    # neural grid
    bounds_min: tuple[float, float, float] = (0.0, 0.0, 0.0)
    bounds_max: tuple[float, float, float] = (10.0, 10.0, 10.0)
    grid_cell_size: float = 2.0
    payload_ttl: int = 3
    payload_decay: float = 0.9
    epsilon_magnitude: float = 1e-6
    gradient_sigma: float = 1.0

    # development
    action_scan_radius: float = 2.0
    spawn_radius: float = 1.0
    growth_step: float = 0.25
    max_step: float = 0.5
    max_nodes: int = 64  # neurogenesis cap; births beyond it are dropped

    seed: int = 0

    def validate(self) -> None:
        v: list[str] = []
        if self.dim_xy < 1:
            v.append(f"dim_xy must be >= 1, got {self.dim_xy}")
        if self.dim_z < 1:
            v.append(f"dim_z must be >= 1, got {self.dim_z}")
        if not self.min_e > 0:
            v.append(f"min_e must be > 0, got {self.min_e}")
        if not (0.0 <= self.dr < 0.5):
            v.append(f"dr must lie in [0, 0.5), got {self.dr}")
        if self.learning_rate < 0:
            v.append(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0.0 <= self.mutation_rate <= 1.0):
            v.append(f"mutation_rate must lie in [0, 1], got {self.mutation_rate}")
        if self.stability_prune_threshold < 0:
            v.append("stability_prune_threshold must be >= 0")
        if self.stability_min < 0:
            v.append("stability_min must be >= 0")
        if self.architector_sigma <= 0:
            v.append("architector_sigma must be > 0")
        if self.initial_nodes < 0:
            v.append("initial_nodes must be >= 0")
        if self.initial_genes < 0:
            v.append("initial_genes must be >= 0")
        if self.initial_dendrites < 0:
            v.append("initial_dendrites must be >= 0")
        if self.initial_dendrites > self.dim_xy * self.dim_xy:
            v.append(
                f"initial_dendrites ({self.initial_dendrites}) exceeds entry-plane "
                f"capacity {self.dim_xy * self.dim_xy}"
            )
        if self.initial_axon_terminals < 0:
            v.append("initial_axon_terminals must be >= 0")
        if self.dendrite_pickup_radius <= 0:
            v.append("dendrite_pickup_radius must be > 0")
        if self.emit_magnitude <= 0:
            v.append("emit_magnitude must be > 0")
        if self.num_transmitter_indices < 1:
            v.append("num_transmitter_indices must be >= 1")
        if self.num_architector_indices < 1:
            v.append("num_architector_indices must be >= 1")
        if any(lo >= hi for lo, hi in zip(self.bounds_min, self.bounds_max)):
            v.append(f"bounds_min {self.bounds_min} must be < bounds_max {self.bounds_max} per axis")
        if self.grid_cell_size <= 0:
            v.append("grid_cell_size must be > 0")
        if self.payload_ttl < 0:
            v.append("payload_ttl must be >= 0")
        if not (0.0 < self.payload_decay <= 1.0):
            v.append(f"payload_decay must lie in (0, 1], got {self.payload_decay}")
        if self.epsilon_magnitude < 0:
            v.append("epsilon_magnitude must be >= 0")
        if self.gradient_sigma <= 0:
            v.append("gradient_sigma must be > 0")
        if self.action_scan_radius <= 0:
            v.append("action_scan_radius must be > 0")
        if self.max_step < 0:
            v.append("max_step must be >= 0")
        if self.max_nodes < 1:
            v.append(f"max_nodes must be >= 1, got {self.max_nodes}")
        if not (0.0 <= self.growth_step <= self.max_step):
            v.append(f"growth_step must lie in [0, max_step={self.max_step}], got {self.growth_step}")
        if v:
            raise ConfigError(v)

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            val = getattr(self, f.name)
            d[f.name] = list(val) if isinstance(val, tuple) else val
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config key: {k}" for k in unknown])
        kwargs = dict(data)
        for key in ("bounds_min", "bounds_max"):
            if key in kwargs:
                val = kwargs[key]
                if not (isinstance(val, (list, tuple)) and len(val) == 3):
                    raise ConfigError([f"{key} must be a 3-element list"])
                kwargs[key] = tuple(float(x) for x in val)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "EngineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
