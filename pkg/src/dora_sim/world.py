"""Grid environment, radiation sources and the ground-truth radiation field."""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .config import ConfigError, SimConfig

MAX_PLACEMENT_TRIES = 1000


class CellCoord(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class RadiationSource:
    position: CellCoord
    intensity: float

    def __post_init__(self):
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError(f"source intensity {self.intensity} outside [0, 1]")


@dataclass(frozen=True)
class GridWorld:
    width: int
    height: int
    cell_size: float = 1.0
    sources: tuple[RadiationSource, ...] = ()
    obstacles: frozenset[CellCoord] = field(default_factory=frozenset)
    background_sigma: float = 0.05
    decay: float = 5.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid extents must be >= 1")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        for cell in self.obstacles:
            if not self.in_bounds(cell):
                raise ValueError(f"obstacle {cell} outside the grid")
        for src in self.sources:
            if not self.in_bounds(src.position):
                raise ValueError(f"source {src.position} outside the grid")
            if src.position in self.obstacles:
                raise ValueError(f"source {src.position} placed on an obstacle")

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    @cached_property
    def truth(self) -> np.ndarray:
        """Noise-free radiation field indexed ``[x, y]``."""
        xs, ys = np.meshgrid(np.arange(self.width), np.arange(self.height), indexing="ij")
        out = np.zeros((self.width, self.height))
        for src in self.sources:
            rho2 = (xs - src.position.x) ** 2 + (ys - src.position.y) ** 2
            out += src.intensity / (1.0 + self.decay * rho2)
        return out

    def free_cells(self) -> list[CellCoord]:
        return [
            CellCoord(x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.obstacles
        ]

    def to_csv(self) -> str:
        truth = self.truth
        rows = ["x,y,radiation_truth,obstacle"]
        for y in range(self.height):
            for x in range(self.width):
                rows.append(f"{x},{y},{float(truth[x, y])!r},{int((x, y) in self.obstacles)}")
        return "\n".join(rows) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


def radiation_from_source(source: RadiationSource, cell, decay: float) -> float:
    if decay < 0:
        raise ValueError("decay constant must be >= 0")
    rho2 = (cell[0] - source.position[0]) ** 2 + (cell[1] - source.position[1]) ** 2
    return source.intensity / (1.0 + decay * rho2)


def total_radiation(world: GridWorld, cell, rng: random.Random) -> float:
    """Sensor reading at ``cell``: field value plus one Gaussian background draw, floored at 0."""
    noise = rng.gauss(0.0, world.background_sigma)
    return max(0.0, float(world.truth[cell[0], cell[1]]) + noise)


def is_traversable(world: GridWorld, cell) -> bool:
    return world.in_bounds(cell) and tuple(cell) not in world.obstacles


def cell_index(coord: float, cell_size: float) -> int:
    q = coord / cell_size
    # absorb representation error, e.g. 3.0 / 0.2 == 14.999999999999998
    return math.floor(q + 1e-9 * max(1.0, abs(q)))


def discretize(position, cell_size: float) -> CellCoord:
    if cell_size <= 0:
        raise ValueError("cell_size must be > 0")
    return CellCoord(cell_index(position[0], cell_size), cell_index(position[1], cell_size))


def corner_cells(width: int, height: int) -> list[CellCoord]:
    corners = [CellCoord(0, 0), CellCoord(width - 1, 0), CellCoord(0, height - 1),
               CellCoord(width - 1, height - 1)]
    return list(dict.fromkeys(corners))


def generate_world(config: SimConfig, rng: random.Random) -> GridWorld:
    """Place obstacle rectangles, then sources on free cells.

    With ``layout="corners"`` the sources take grid corners (the physical
    arena setup) and the remaining corners are left for robot placement.
    """
    side = max(1, math.ceil(config.obstacle_size / config.cell_size - 1e-9))
    w, h = config.width, config.height
    if config.n_obstacles and (side > w or side > h):
        raise ConfigError(f"obstacles of {side}x{side} cells do not fit a {w}x{h} grid")

    reserved: set[CellCoord] = set()
    if config.layout == "corners":
        corners = corner_cells(w, h)
        if config.n_sources > len(corners):
            raise ConfigError("corners layout supports at most one source per corner")
        source_cells = rng.sample(corners, config.n_sources)
        reserved.update(corners)
    else:
        source_cells = []

    obstacles: set[CellCoord] = set()
    for _ in range(config.n_obstacles):
        for _ in range(MAX_PLACEMENT_TRIES):
            x0 = rng.randrange(w - side + 1)
            y0 = rng.randrange(h - side + 1)
            block = {CellCoord(x0 + dx, y0 + dy) for dx in range(side) for dy in range(side)}
            if not block & obstacles and not block & reserved:
                obstacles |= block
                break
        else:
            raise ConfigError("could not place obstacles: grid too crowded")

    if config.layout != "corners":
        free = [CellCoord(x, y) for y in range(h) for x in range(w) if (x, y) not in obstacles]
        if config.n_sources > len(free):
            raise ConfigError("more radiation sources than free cells")
        source_cells = rng.sample(free, config.n_sources)

    sources = tuple(RadiationSource(cell, rng.random()) for cell in source_cells)
    return GridWorld(
        width=w,
        height=h,
        cell_size=config.cell_size,
        sources=sources,
        obstacles=frozenset(obstacles),
        background_sigma=config.background_sigma,
        decay=config.decay,
    )
