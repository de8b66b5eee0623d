"""Currently Expressed Model: the PWR lattices and their propagation machinery.

A process node's computational core is three X*Y*Z lattices (X == Y):
propagation energy, weights in [0,1], and per-cell router options. Energy
deposited on the entry plane climbs plane by plane; each energized cell
forwards a sigmoid-transferred share to exactly one cell of the next plane,
chosen by its router. A plane whose accumulated energy reaches the minimum
threshold spikes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# The nine router options: lateral (dx, dy) offsets, target plane always z+1.
# CENTER routes straight up (the "direct route").
ROUTER_OPTIONS: tuple[tuple[int, int], ...] = tuple(
    (dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
)
CENTER: int = ROUTER_OPTIONS.index((0, 0))


class DepositError(ValueError):
    """A deposit landed outside the entry plane."""


class StructureError(ValueError):
    """Mismatched lattice dimensions."""


@dataclass
class SpikeEvent:
    z_index: int
    plane_energy: float
    epoch: int = -1
    node_id: int = -1

    def to_dict(self) -> dict:
        return {
            "z_index": self.z_index,
            "plane_energy": float(self.plane_energy),
            "epoch": self.epoch,
            "node_id": self.node_id,
        }


@dataclass
class GoalPlane:
    """Backprop target: the propagation values at a reference spike plane."""

    z_index: int
    target_p: np.ndarray  # [X][Y]

    def to_dict(self) -> dict:
        return {"z_index": self.z_index, "target_p": self.target_p.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "GoalPlane":
        return cls(z_index=int(d["z_index"]), target_p=np.array(d["target_p"], dtype=np.float64))


@dataclass
class Hop:
    """One cell-to-cell energy transfer recorded during a forward pass."""

    src: tuple[int, int]     # (x, y) in plane z
    dst: tuple[int, int]     # (x, y) in plane z+1
    z: int
    p_sent: float            # source p at send time
    w_val: float


@dataclass
class PropagationTrace:
    """Routed-predecessor record of a single forward pass."""

    hops_by_plane: list[list[Hop]] = field(default_factory=list)
    energized: list[list[tuple[int, int]]] = field(default_factory=list)
    spike_z: Optional[int] = None


def transfer(p_val: float, w_val: float, dr: float) -> float:
    """Sigmoid of the energy-weight product, minus the propagation cost.

    Clamped at zero so energy never goes negative.
    """
    return max(0.0, 1.0 / (1.0 + math.exp(-(p_val * w_val))) - dr)


class PwrTensor:
    """Propagation, Weight and Router lattices plus the per-plane energy accumulator."""

    def __init__(self, dim_xy: int, dim_z: int,
                 p: Optional[np.ndarray] = None,
                 w: Optional[np.ndarray] = None,
                 r: Optional[np.ndarray] = None):
        if dim_xy < 1 or dim_z < 1:
            raise StructureError(f"tensor dims must be >= 1, got {dim_xy}x{dim_xy}x{dim_z}")
        self.dim_xy = dim_xy
        self.dim_z = dim_z
        shape = (dim_xy, dim_xy, dim_z)
        self.p = np.zeros(shape) if p is None else np.asarray(p, dtype=np.float64)
        self.w = np.ones(shape) if w is None else np.asarray(w, dtype=np.float64)
        self.r = np.full(shape, CENTER, dtype=np.int8) if r is None else np.asarray(r, dtype=np.int8)
        for name, arr in (("p", self.p), ("w", self.w), ("r", self.r)):
            if arr.shape != shape:
                raise StructureError(f"{name} lattice shape {arr.shape} != {shape}")
        self.plane_energy_acc = np.zeros(dim_z)
        self.last_trace: Optional[PropagationTrace] = None

    @classmethod
    def random(cls, dim_xy: int, dim_z: int, rng) -> "PwrTensor":
        """Fresh tensor: zero energy, uniform random weights and routers."""
        t = cls(dim_xy, dim_z)
        for x in range(dim_xy):
            for y in range(dim_xy):
                for z in range(dim_z):
                    t.w[x, y, z] = rng.random()
                    t.r[x, y, z] = rng.randrange(len(ROUTER_OPTIONS))
        return t

    # -- forward path ------------------------------------------------------

    def accumulate_plane_energy(self, z: int, at_mod: float = 1.0) -> float:
        """PE_z = at_mod * PE_{z-1} + sum of plane z, with PE_{-1} = 0."""
        if not (0 <= z < self.dim_z):
            raise IndexError(f"plane {z} out of range [0, {self.dim_z})")
        prev = self.plane_energy_acc[z - 1] if z > 0 else 0.0
        pe = at_mod * prev + float(self.p[:, :, z].sum())
        self.plane_energy_acc[z] = pe
        return pe

    def forward_propagate(self, deposits, min_e: float, dr: float,
                          at_mod: float = 1.0) -> Optional[SpikeEvent]:
        """Run one recursive pass across z; spike as soon as PE_z >= min_e.

        Deposits land on the entry plane (z=0). Cells that do not trigger a
        spike each forward their transferred energy to the single next-plane
        cell their router selects; lateral offsets clamp at the lattice edge.
        Residual energy is retained when no plane spikes. The pass is recorded
        in ``last_trace`` for router reinforcement and backprop.
        """
        n = self.dim_xy
        for x, y, mag in deposits:
            if not (0 <= x < n and 0 <= y < n):
                raise DepositError(f"deposit at ({x}, {y}) outside {n}x{n} entry plane")
            self.p[x, y, 0] = max(0.0, self.p[x, y, 0] + mag)

        trace = PropagationTrace()
        self.last_trace = trace
        for z in range(self.dim_z):
            pe = self.accumulate_plane_energy(z, at_mod)
            cells = [(int(x), int(y)) for x, y in np.argwhere(self.p[:, :, z] > 0.0)]
            trace.energized.append(cells)
            if pe >= min_e:
                trace.spike_z = z
                return SpikeEvent(z_index=z, plane_energy=pe)
            if z + 1 >= self.dim_z:
                break
            hops: list[Hop] = []
            out = np.zeros((n, n))
            for x, y in cells:
                pv = float(self.p[x, y, z])
                wv = float(self.w[x, y, z])
                dx, dy = ROUTER_OPTIONS[self.r[x, y, z]]
                tx = min(max(x + dx, 0), n - 1)
                ty = min(max(y + dy, 0), n - 1)
                out[tx, ty] += transfer(pv, wv, dr)
                hops.append(Hop(src=(x, y), dst=(tx, ty), z=z, p_sent=pv, w_val=wv))
            trace.hops_by_plane.append(hops)
            self.p[:, :, z + 1] += out
        return None

    # -- router dynamics ---------------------------------------------------

    def update_routers_on_spike(self, spike: SpikeEvent) -> set[tuple[int, int, int]]:
        """Rewire every cell energized below the spiking plane to the direct route."""
        trace = self.last_trace
        if trace is None or trace.spike_z != spike.z_index:
            raise StructureError("spike does not match the last recorded forward pass")
        rewired: set[tuple[int, int, int]] = set()
        for z in range(spike.z_index):
            for x, y in trace.energized[z]:
                self.r[x, y, z] = CENTER
                rewired.add((x, y, z))
        return rewired

    def randomize_stale_routers(self, rng) -> int:
        """Give every still-energized cell a random router; epoch-end, no spike."""
        count = 0
        for x, y, z in np.argwhere(self.p > 0.0):
            self.r[x, y, z] = rng.randrange(len(ROUTER_OPTIONS))
            count += 1
        return count

    def reset_propagation(self) -> None:
        self.p.fill(0.0)
        self.plane_energy_acc.fill(0.0)

    # -- backprop ----------------------------------------------------------

    def goal_loss_gradients(self, goal: GoalPlane, trace: PropagationTrace,
                            dr: float = 0.0
                            ) -> tuple[float, dict[tuple[int, int, int], float]]:
        """Squared-error loss at the goal plane and d(loss)/dw per visited cell.

        The single error is evaluated at the goal plane; gradients flow back
        only along each cell's recorded routed-predecessor chain through the
        sigmoid derivative.
        """
        if goal.target_p.shape != (self.dim_xy, self.dim_xy):
            raise StructureError(
                f"goal plane shape {goal.target_p.shape} != ({self.dim_xy}, {self.dim_xy})")
        zs = goal.z_index
        if not (0 <= zs < self.dim_z) or zs > len(trace.hops_by_plane):
            raise StructureError(f"goal plane {zs} not covered by the recorded pass")
        diff = self.p[:, :, zs] - goal.target_p
        loss = 0.5 * float((diff * diff).sum())
        grad_p = diff.copy()  # d loss / d p at the current plane
        grad_w: dict[tuple[int, int, int], float] = {}
        for z in range(zs - 1, -1, -1):
            grad_prev = np.zeros_like(grad_p)
            for hop in trace.hops_by_plane[z]:
                g = grad_p[hop.dst]
                if g == 0.0:
                    continue
                v = hop.p_sent * hop.w_val
                s = 1.0 / (1.0 + math.exp(-v))
                if s - dr <= 0.0:  # clamped transfer carries no gradient
                    continue
                ds = s * (1.0 - s)
                key = (hop.src[0], hop.src[1], z)
                grad_w[key] = grad_w.get(key, 0.0) + g * ds * hop.p_sent
                grad_prev[hop.src] += g * ds * hop.w_val
            grad_p = grad_prev
        return loss, grad_w

    def backprop_to_goal(self, goal: GoalPlane, trace: PropagationTrace,
                         learning_rate: float, dr: float = 0.0) -> float:
        """One SGD step of the visited weights toward the goal plane; returns loss."""
        loss, grad_w = self.goal_loss_gradients(goal, trace, dr)
        for (x, y, z), g in grad_w.items():
            self.w[x, y, z] = min(1.0, max(0.0, self.w[x, y, z] - learning_rate * g))
        return loss

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dim_xy": self.dim_xy,
            "dim_z": self.dim_z,
            "p": self.p.tolist(),
            "w": self.w.tolist(),
            "r": self.r.tolist(),
            "plane_energy_acc": self.plane_energy_acc.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PwrTensor":
        t = cls(int(d["dim_xy"]), int(d["dim_z"]),
                p=np.array(d["p"], dtype=np.float64),
                w=np.array(d["w"], dtype=np.float64),
                r=np.array(d["r"], dtype=np.int8))
        t.plane_energy_acc = np.array(d["plane_energy_acc"], dtype=np.float64)
        return t
