"""The shared 3D environment holding transmitter/architector payloads.

Continuous coordinates with a uniform-cell spatial hash. All mutations are
staged and applied at an explicit commit barrier so that every query between
two commits sees the same frozen state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

TRANSMITTER = "transmitter"
ARCHITECTOR = "architector"


class GridError(ValueError):
    """Out-of-bounds deposit or malformed payload."""


@dataclass
class TransArchPayload:
    pid: int
    kind: str  # TRANSMITTER or ARCHITECTOR
    index: int
    position: tuple[float, float, float]
    magnitude: float
    ttl: int
    properties: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "pid": self.pid,
            "kind": self.kind,
            "index": self.index,
            "position": [float(c) for c in self.position],
            "magnitude": float(self.magnitude),
            "ttl": self.ttl,
            "properties": dict(sorted(self.properties.items())),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransArchPayload":
        return cls(pid=int(d["pid"]), kind=d["kind"], index=int(d["index"]),
                   position=tuple(float(c) for c in d["position"]),
                   magnitude=float(d["magnitude"]), ttl=int(d["ttl"]),
                   properties=dict(d["properties"]))


def _dist(a, b) -> float:
    return math.sqrt(sum((ai - bi) ** 2 for ai, bi in zip(a, b)))


class NeuralGrid:
    def __init__(self, bounds_min, bounds_max, cell_size: float = 2.0):
        self.bounds_min = tuple(float(c) for c in bounds_min)
        self.bounds_max = tuple(float(c) for c in bounds_max)
        self.cell_size = float(cell_size)
        self.payloads: dict[int, TransArchPayload] = {}
        self._next_pid = 0
        self._pending_deposits: list[TransArchPayload] = []
        self._pending_removals: list[int] = []
        self._cells: dict[tuple[int, int, int], list[int]] = {}
        # per-epoch counters, read and reset by the epoch runner
        self.deposited_count = 0
        self.consumed_count = 0
        self.expired_count = 0

    # -- lifecycle ---------------------------------------------------------

    def in_bounds(self, pos) -> bool:
        return all(lo <= c <= hi for c, lo, hi in zip(pos, self.bounds_min, self.bounds_max))

    def clamp(self, pos) -> tuple[float, float, float]:
        return tuple(min(max(c, lo), hi)
                     for c, lo, hi in zip(pos, self.bounds_min, self.bounds_max))

    def new_payload(self, kind: str, index: int, position, magnitude: float,
                    ttl: int, properties: Optional[dict] = None) -> TransArchPayload:
        if magnitude <= 0:
            raise GridError(f"payload magnitude must be > 0, got {magnitude}")
        pl = TransArchPayload(pid=self._next_pid, kind=kind, index=index,
                              position=tuple(float(c) for c in position),
                              magnitude=float(magnitude), ttl=int(ttl),
                              properties=dict(properties or {}))
        self._next_pid += 1
        return pl

    def deposit(self, payload: TransArchPayload) -> None:
        """Queue a payload; it becomes visible only after the next commit."""
        if not self.in_bounds(payload.position):
            raise GridError(f"payload position {payload.position} outside grid bounds")
        self._pending_deposits.append(payload)

    def remove(self, pid: int) -> None:
        self._pending_removals.append(pid)

    def commit(self) -> None:
        for pid in self._pending_removals:
            if self.payloads.pop(pid, None) is not None:
                self.consumed_count += 1
        self._pending_removals.clear()
        for pl in self._pending_deposits:
            self.payloads[pl.pid] = pl
            self.deposited_count += 1
        self._pending_deposits.clear()
        self._rebuild_index()

    def reset_epoch_counters(self) -> tuple[int, int, int]:
        counts = (self.deposited_count, self.consumed_count, self.expired_count)
        self.deposited_count = self.consumed_count = self.expired_count = 0
        return counts

    # -- spatial queries ---------------------------------------------------

    def _cell_of(self, pos) -> tuple[int, int, int]:
        return tuple(int(math.floor(c / self.cell_size)) for c in pos)

    def _rebuild_index(self) -> None:
        self._cells = {}
        for pid, pl in self.payloads.items():
            self._cells.setdefault(self._cell_of(pl.position), []).append(pid)

    def query_radius(self, center, r: float) -> list[TransArchPayload]:
        """Committed payloads within Euclidean distance r, ordered by (distance, pid)."""
        if r < 0:
            raise GridError(f"radius must be >= 0, got {r}")
        lo = self._cell_of(tuple(c - r for c in center))
        hi = self._cell_of(tuple(c + r for c in center))
        found: list[tuple[float, int]] = []
        for cx in range(lo[0], hi[0] + 1):
            for cy in range(lo[1], hi[1] + 1):
                for cz in range(lo[2], hi[2] + 1):
                    for pid in self._cells.get((cx, cy, cz), ()):
                        d = _dist(self.payloads[pid].position, center)
                        if d <= r:
                            found.append((d, pid))
        found.sort()
        return [self.payloads[pid] for _, pid in found]

    def density_gradient(self, pos, index: int, sigma: float = 1.0):
        """Gradient of the Gaussian kernel-density field of payloads with this index.

        Field: sum_p magnitude_p * exp(-|pos - p|^2 / (2 sigma^2)).
        """
        grad = [0.0, 0.0, 0.0]
        inv_s2 = 1.0 / (sigma * sigma)
        for pid in sorted(self.payloads):
            pl = self.payloads[pid]
            if pl.index != index:
                continue
            delta = [pc - c for pc, c in zip(pl.position, pos)]
            d2 = sum(x * x for x in delta)
            k = pl.magnitude * math.exp(-0.5 * d2 * inv_s2)
            for i in range(3):
                grad[i] += k * delta[i] * inv_s2
        return tuple(grad)

    def density(self, pos, index: int, sigma: float = 1.0) -> float:
        total = 0.0
        inv_s2 = 1.0 / (sigma * sigma)
        for pl in self.payloads.values():
            if pl.index != index:
                continue
            d2 = sum((pc - c) ** 2 for pc, c in zip(pl.position, pos))
            total += pl.magnitude * math.exp(-0.5 * d2 * inv_s2)
        return total

    # -- aging -------------------------------------------------------------

    def decay_and_expire(self, decay_factor: float, epsilon_magnitude: float = 1e-6) -> int:
        """Scale every magnitude, tick every ttl, drop spent payloads."""
        if not (0.0 < decay_factor <= 1.0):
            raise GridError(f"decay_factor must lie in (0, 1], got {decay_factor}")
        dead = []
        for pid in sorted(self.payloads):
            pl = self.payloads[pid]
            pl.magnitude *= decay_factor
            pl.ttl -= 1
            if pl.ttl < 0 or pl.magnitude < epsilon_magnitude:
                dead.append(pid)
        for pid in dead:
            del self.payloads[pid]
        self.expired_count += len(dead)
        self._rebuild_index()
        return len(dead)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "bounds_min": list(self.bounds_min),
            "bounds_max": list(self.bounds_max),
            "cell_size": self.cell_size,
            "next_pid": self._next_pid,
            "payloads": [self.payloads[pid].to_dict() for pid in sorted(self.payloads)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralGrid":
        g = cls(d["bounds_min"], d["bounds_max"], cell_size=float(d["cell_size"]))
        g._next_pid = int(d["next_pid"])
        for pd in d["payloads"]:
            pl = TransArchPayload.from_dict(pd)
            g.payloads[pl.pid] = pl
        g._rebuild_index()
        return g
