"""Per-robot controllers: DORA's local gradient law, frontier exploration, random walk."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, NamedTuple, Sequence

import numpy as np

if TYPE_CHECKING:
    from .stigmergy import StigmergyReplica

# Moore offsets, starting top-left and going clockwise
MOORE: tuple[tuple[int, int], ...] = (
    (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0),
)
UNIT: tuple[tuple[float, float], ...] = tuple(
    (dx / math.hypot(dx, dy), dy / math.hypot(dx, dy)) for dx, dy in MOORE
)

N_SENSORS = 8
SENSOR_ANGLES = tuple(2 * math.pi * s / N_SENSORS for s in range(N_SENSORS))
_SENSOR_COS = tuple(math.cos(a) for a in SENSOR_ANGLES)
_SENSOR_SIN = tuple(math.sin(a) for a in SENSOR_ANGLES)

EXPLORED, FRONTIER, UNEXPLORED = "explored", "frontier", "unexplored"


@dataclass(frozen=True)
class Neighborhood:
    offsets: tuple[tuple[int, int], ...] = MOORE

    def __post_init__(self):
        if (0, 0) in self.offsets or len(set(self.offsets)) != len(self.offsets):
            raise ValueError("offsets must be distinct and exclude (0, 0)")

    def __len__(self):
        return len(self.offsets)


MOORE_NEIGHBORHOOD = Neighborhood()


@dataclass(frozen=True)
class ControlGains:
    alpha: float = 2.0
    beta: float = 1.0
    gamma: float = 1.0
    k: float = 0.2
    stagnation_epsilon: float = 1e-3

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma, self.stagnation_epsilon) < 0:
            raise ValueError("gains must be >= 0")
        if not self.k > 0:
            raise ValueError("k must be > 0")


class MovementCommand(NamedTuple):
    vector: tuple[float, float]
    fallback_forward: bool = False


def _units(neighborhood: Neighborhood):
    if neighborhood.offsets is MOORE:
        return UNIT
    return tuple((dx / math.hypot(dx, dy), dy / math.hypot(dx, dy)) for dx, dy in neighborhood.offsets)


def local_gradient(
    values: Mapping,
    center,
    neighborhood: Neighborhood = MOORE_NEIGHBORHOOD,
    missing_default: float = 0.0,
) -> tuple[float, float]:
    """Sum of ``(v(center) - v(neighbor)) * unit(offset)`` over the neighborhood.

    The result points towards lower values. Absent or ``None`` values read as
    ``missing_default``.
    """
    cx, cy = center[0], center[1]
    c = values.get((cx, cy))
    if c is None:
        c = missing_default
    gx = gy = 0.0
    for (dx, dy), (ux, uy) in zip(neighborhood.offsets, _units(neighborhood)):
        v = values.get((cx + dx, cy + dy))
        if v is None:
            v = missing_default
        diff = c - v
        gx += diff * ux
        gy += diff * uy
    return gx, gy


def obstacle_avoidance(proximity: Sequence[float], heading: float = 0.0) -> tuple[float, float]:
    """Repulsion from proximity readings taken at evenly spaced body-frame angles."""
    bx = by = 0.0
    for reading, c, s in zip(proximity, _SENSOR_COS, _SENSOR_SIN):
        if reading:
            bx -= reading * c
            by -= reading * s
    if bx == 0.0 and by == 0.0:
        return 0.0, 0.0
    ch, sh = math.cos(heading), math.sin(heading)
    return bx * ch - by * sh, bx * sh + by * ch


def _read_patch(replica: "StigmergyReplica", cell, neighborhood: Neighborhood) -> dict:
    cx, cy = cell
    patch = {(cx + dx, cy + dy): replica.vget((cx + dx, cy + dy)) for dx, dy in neighborhood.offsets}
    patch[(cx, cy)] = replica.value((cx, cy))
    return patch


def dora_step(
    robot,
    r_map: "StigmergyReplica",
    e_map: "StigmergyReplica",
    proximity: Sequence[float],
    gains: ControlGains,
    neighborhood: Neighborhood = MOORE_NEIGHBORHOOD,
    t: int = 1,
    normalize_time: bool = True,
    blocked=None,
) -> MovementCommand:
    """One DORA decision: ``alpha * grad_r + beta * grad_eps + gamma * o``.

    Neighbor values come through ``vget`` (two reads per neighbor); the
    center values are the robot's own latest entries. Neighbors for which
    ``blocked(cell)`` is true (outside the arena, or obstacles the robot has
    sensed) are given the center value so they neither attract nor repel.
    """
    cell = robot.cell
    r_patch = _read_patch(r_map, cell, neighborhood)
    e_patch = _read_patch(e_map, cell, neighborhood)
    if blocked is not None:
        rc = r_patch[cell] if r_patch[cell] is not None else 0.0
        ec = e_patch[cell] if e_patch[cell] is not None else 0.0
        for dx, dy in neighborhood.offsets:
            n = (cell[0] + dx, cell[1] + dy)
            if blocked(n):
                r_patch[n] = rc
                e_patch[n] = ec
    grx, gry = local_gradient(r_patch, cell, neighborhood, 0.0)
    gex, gey = local_gradient(e_patch, cell, neighborhood, 0.0)
    if normalize_time:
        scale = 1.0 / max(t, 1)
        gex *= scale
        gey *= scale
    ox, oy = obstacle_avoidance(proximity, robot.heading)
    mx = gains.alpha * grx + gains.beta * gex + gains.gamma * ox
    my = gains.alpha * gry + gains.beta * gey + gains.gamma * oy
    if math.hypot(mx, my) < gains.stagnation_epsilon:
        return MovementCommand((mx, my), True)
    return MovementCommand((mx, my), False)


def apply_control(position, command: MovementCommand, k: float, heading: float):
    """Advance exactly ``k`` along the normalized command (or the heading on fallback)."""
    if command.fallback_forward:
        ux, uy = math.cos(heading), math.sin(heading)
    else:
        mx, my = command.vector
        norm = math.hypot(mx, my)
        if norm == 0.0 or not math.isfinite(norm):
            ux, uy = math.cos(heading), math.sin(heading)
        else:
            ux, uy = mx / norm, my / norm
            heading = math.atan2(my, mx)
    return (position[0] + k * ux, position[1] + k * uy), heading


def classify_cells(explored_keys, width: int, height: int, blocked=()) -> dict:
    """Label every in-bounds, non-blocked cell explored / frontier / unexplored."""
    explored = set(explored_keys)
    blocked = set(blocked)
    labels = {}
    for y in range(height):
        for x in range(width):
            if (x, y) in blocked:
                continue
            if (x, y) not in explored:
                labels[(x, y)] = UNEXPLORED
                continue
            label = EXPLORED
            for dx, dy in MOORE:
                n = (x + dx, y + dy)
                if 0 <= n[0] < width and 0 <= n[1] < height and n not in explored and n not in blocked:
                    label = FRONTIER
                    break
            labels[(x, y)] = label
    return labels


def _dilate(mask: np.ndarray) -> np.ndarray:
    padded = np.pad(mask, 1)
    out = np.zeros_like(mask)
    h, w = mask.shape
    for dx, dy in MOORE:
        out |= padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return out


class FrontierMap:
    """Frontier bookkeeping for one robot, recomputed only when its map grows.

    Targets are the unexplored cells bordering the frontier: a robot only
    observes the cell it stands on, so reaching a frontier cell reveals
    nothing until it steps across it.
    """

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self._version = (-1, -1)
        self.targets = np.empty((0, 2), dtype=float)

    def update(self, table: Mapping, blocked: set) -> np.ndarray:
        version = (len(table), len(blocked))
        if version != self._version:
            self._version = version
            explored = np.zeros((self.height, self.width), dtype=bool)
            for x, y in table:
                if 0 <= x < self.width and 0 <= y < self.height:
                    explored[y, x] = True
            free = np.ones_like(explored)
            for x, y in blocked:
                if 0 <= x < self.width and 0 <= y < self.height:
                    free[y, x] = False
            cand = ~explored & free & _dilate(explored & free)
            ys, xs = np.nonzero(cand)  # row-major, so ties resolve to the lowest (y, x)
            self.targets = np.column_stack((xs, ys)).astype(float)
        return self.targets


def fbe_step(
    robot,
    e_map: "StigmergyReplica",
    proximity: Sequence[float],
    gains: ControlGains,
    frontier: FrontierMap,
    cell_size: float = 1.0,
    blocked: set | None = None,
    neighborhood: Neighborhood = MOORE_NEIGHBORHOOD,
) -> MovementCommand:
    cx, cy = robot.cell
    for dx, dy in neighborhood.offsets:
        e_map.vget((cx + dx, cy + dy))
    targets = frontier.update(e_map.table, blocked or set())
    if len(targets) == 0:
        return MovementCommand((0.0, 0.0), True)
    px = robot.position[0] / cell_size
    py = robot.position[1] / cell_size
    d2 = (targets[:, 0] + 0.5 - px) ** 2 + (targets[:, 1] + 0.5 - py) ** 2
    tx, ty = targets[int(np.argmin(d2))]
    vx, vy = tx + 0.5 - px, ty + 0.5 - py
    norm = math.hypot(vx, vy)
    if norm < 1e-12:
        return MovementCommand((0.0, 0.0), True)
    ox, oy = obstacle_avoidance(proximity, robot.heading)
    return MovementCommand((vx / norm + gains.gamma * ox, vy / norm + gains.gamma * oy), False)


def random_walk_step(
    robot,
    proximity: Sequence[float],
    gains: ControlGains,
    rng: random.Random,
    p_turn: float = 0.2,
) -> MovementCommand:
    """Keep the heading, re-drawing it uniformly with probability ``p_turn``.

    Exactly one uniform draw per call, plus one more when turning.
    """
    heading = robot.heading
    if rng.random() < p_turn:
        heading = rng.uniform(0.0, 2 * math.pi)
    ox, oy = obstacle_avoidance(proximity, robot.heading)
    return MovementCommand((math.cos(heading) + gains.gamma * ox, math.sin(heading) + gains.gamma * oy))
