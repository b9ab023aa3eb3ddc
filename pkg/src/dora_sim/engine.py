"""Deterministic tick loop and run orchestration."""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import control
from .config import ConfigError, SimConfig
from .control import ControlGains, FrontierMap, MovementCommand
from .risk import failure_probability, sample_failure
from .stigmergy import BroadcastBus, StigmergyReplica, merged_table
from .world import CellCoord, GridWorld, cell_index, corner_cells, discretize, generate_world, total_radiation

PROXIMITY_SAMPLES = 8
METRIC_FIELDS = ("active_robots", "explored_cells", "bytes_per_robot", "stig_ops_per_robot")


class InvariantError(RuntimeError):
    """A simulation invariant was violated."""


def robot_stream(seed: int, robot_id: int) -> random.Random:
    """Per-robot RNG stream; string seeds are hashed (SHA-512) by ``random``."""
    return random.Random(f"{seed}/robot/{robot_id}")


def named_stream(seed: int, name: str) -> random.Random:
    return random.Random(f"{seed}/{name}")


@dataclass
class RobotState:
    id: int
    position: tuple[float, float]
    heading: float
    cell: CellCoord
    rng: random.Random
    r_map: StigmergyReplica | None = None
    e_map: StigmergyReplica | None = None
    active: bool = True
    failed_at: int | None = None
    known_obstacles: set = field(default_factory=set)
    frontier: FrontierMap | None = None

    @property
    def replicas(self) -> list[StigmergyReplica]:
        return [rep for rep in (self.r_map, self.e_map) if rep is not None]


@dataclass(frozen=True)
class MetricsRecord:
    tick: int
    active_robots: int
    explored_cells: int
    bytes_per_robot: float
    stig_ops_per_robot: float

    def row(self) -> str:
        return (f"{self.tick},{self.active_robots},{self.explored_cells},"
                f"{self.bytes_per_robot!r},{self.stig_ops_per_robot!r}")


TRACE_HEADER = "tick," + ",".join(METRIC_FIELDS)


@dataclass
class SimState:
    config: SimConfig
    world: GridWorld
    robots: list[RobotState]
    gains: ControlGains
    buses: dict[str, BroadcastBus]
    bus_rng: random.Random
    t: int = 0
    explored: set = field(default_factory=set)
    trace: list[MetricsRecord] = field(default_factory=list)
    # per tick: {robot_id: reads + writes} for robots active at the end of the tick
    ops_log: list[dict[int, int]] = field(default_factory=list)
    bytes_log: list[dict[int, int]] = field(default_factory=list)


@dataclass
class RunResult:
    config: SimConfig
    world: GridWorld
    trace: list[MetricsRecord]
    r_table: dict
    e_table: dict
    robots: list[RobotState]
    ops_log: list[dict[int, int]]
    bytes_log: list[dict[int, int]]

    @property
    def world_digest(self) -> str:
        return self.world.digest()

    @property
    def final(self) -> MetricsRecord:
        return self.trace[-1]

    def metric(self, name: str) -> np.ndarray:
        return np.array([getattr(rec, name) for rec in self.trace], dtype=float)


def gains_from(config: SimConfig) -> ControlGains:
    return ControlGains(
        alpha=config.alpha,
        beta=config.beta,
        gamma=config.gamma,
        k=config.k,
        stagnation_epsilon=config.stagnation_epsilon,
    )


def init_run(config: SimConfig) -> SimState:
    config.validate()
    world = generate_world(config, named_stream(config.seed, "world"))
    placement = named_stream(config.seed, "placement")
    free = world.free_cells()
    if config.n_robots > len(free):
        raise ConfigError(f"{config.n_robots} robots do not fit on {len(free)} free cells")

    if config.layout == "corners":
        source_cells = {s.position for s in world.sources}
        start = [c for c in corner_cells(world.width, world.height)
                 if c not in source_cells and c not in world.obstacles]
        start = start[: config.n_robots]
        rest = [c for c in free if c not in set(start)]
        start += placement.sample(rest, config.n_robots - len(start))
    else:
        start = placement.sample(free, config.n_robots)

    buses = {}
    if config.controller in ("dora", "fbe"):
        for name in ("r", "e") if config.controller == "dora" else ("e",):
            buses[name] = BroadcastBus(config.drop_probability, config.message_bytes, config.max_rounds)

    cs = config.cell_size
    robots = []
    for rid, cell in enumerate(start):
        robot = RobotState(
            id=rid,
            position=((cell.x + 0.5) * cs, (cell.y + 0.5) * cs),
            heading=placement.uniform(0.0, 2 * math.pi),
            cell=CellCoord(*cell),
            rng=robot_stream(config.seed, rid),
        )
        if config.controller == "dora":
            robot.r_map = StigmergyReplica(rid, buses["r"])
            robot.e_map = StigmergyReplica(rid, buses["e"])
        elif config.controller == "fbe":
            robot.e_map = StigmergyReplica(rid, buses["e"])
            robot.frontier = FrontierMap(world.width, world.height)
        else:
            # private log, no communication
            robot.r_map = StigmergyReplica(rid)
            robot.e_map = StigmergyReplica(rid)
        robots.append(robot)

    return SimState(
        config=config,
        world=world,
        robots=robots,
        gains=gains_from(config),
        buses=buses,
        bus_rng=named_stream(config.seed, "bus"),
    )


def _obstacle_near(world: GridWorld, x: float, y: float, reach: float) -> bool:
    cs = world.cell_size
    for ox, oy in world.obstacles:
        if ox * cs - reach <= x <= (ox + 1) * cs + reach and oy * cs - reach <= y <= (oy + 1) * cs + reach:
            return True
    return False


def proximity_readings(world: GridWorld, position, heading: float, sensor_range: float):
    """Eight readings in [0, 1] (1 - distance / range to the first blocked point) and the obstacle cells hit."""
    x, y = position
    cs = world.cell_size
    wm, hm = world.width * cs, world.height * cs
    zeros = [0.0] * control.N_SENSORS
    if sensor_range <= 0:
        return zeros, set()
    if (sensor_range < x < wm - sensor_range and sensor_range < y < hm - sensor_range
            and not _obstacle_near(world, x, y, sensor_range)):
        return zeros, set()
    readings = []
    hits = set()
    obstacles = world.obstacles
    for angle in control.SENSOR_ANGLES:
        c, s = math.cos(heading + angle), math.sin(heading + angle)
        reading = 0.0
        for i in range(1, PROXIMITY_SAMPLES + 1):
            d = sensor_range * i / PROXIMITY_SAMPLES
            cell = (cell_index(x + d * c, cs), cell_index(y + d * s, cs))
            if not world.in_bounds(cell):
                reading = 1.0 - d / sensor_range
                break
            if cell in obstacles:
                hits.add(cell)
                reading = 1.0 - d / sensor_range
                break
        readings.append(reading)
    return readings, hits


def resolve_motion(world: GridWorld, old, new, heading: float, bumped: set):
    """Cancel displacement components that leave the arena or enter an obstacle.

    A cancelled component also reflects the heading on that axis, so a robot
    moving straight ahead bounces instead of pressing against the wall.
    """
    cs = world.cell_size
    x0, y0 = old
    x1, y1 = new

    def blocked(px, py):
        cell = (cell_index(px, cs), cell_index(py, cs))
        if not world.in_bounds(cell):
            return True
        if cell in world.obstacles:
            bumped.add(cell)
            return True
        return False

    if x1 != x0 and blocked(x1, y0):
        x1 = x0
        heading = math.pi - heading
    if y1 != y0 and blocked(x1, y1):
        y1 = y0
        heading = -heading
    return (x1, y1), math.atan2(math.sin(heading), math.cos(heading))


def _controller_command(sim: SimState, robot: RobotState, proximity) -> MovementCommand:
    config, world = sim.config, sim.world
    if config.controller == "dora":
        known = robot.known_obstacles

        def blocked(cell):
            return not (0 <= cell[0] < world.width and 0 <= cell[1] < world.height) or cell in known

        return control.dora_step(
            robot, robot.r_map, robot.e_map, proximity, sim.gains,
            t=sim.t, normalize_time=config.epsilon_normalization == "time", blocked=blocked,
        )
    if config.controller == "fbe":
        return control.fbe_step(
            robot, robot.e_map, proximity, sim.gains, robot.frontier,
            cell_size=world.cell_size, blocked=robot.known_obstacles,
        )
    return control.random_walk_step(robot, proximity, sim.gains, robot.rng, config.p_turn)


def _fail(sim: SimState, robot: RobotState) -> None:
    robot.active = False
    robot.failed_at = sim.t
    for bus in sim.buses.values():
        bus.detach(robot.id)


def tick(sim: SimState) -> SimState:
    config, world = sim.config, sim.world
    if sim.t >= config.steps:
        raise InvariantError(f"run already finished ({config.steps} steps)")
    sim.t += 1
    t = sim.t
    per_step = config.failure_policy == "per_step"
    use_truth = config.failure_input == "truth"
    sensor_range = config.sensor_range * world.cell_size

    for robot in sim.robots:
        if not robot.active:
            continue
        proximity, seen = proximity_readings(world, robot.position, robot.heading, sensor_range)
        robot.known_obstacles |= seen
        command = _controller_command(sim, robot, proximity)
        proposed, heading = control.apply_control(robot.position, command, config.k, robot.heading)
        robot.position, robot.heading = resolve_motion(
            world, robot.position, proposed, heading, robot.known_obstacles)
        cell = discretize(robot.position, world.cell_size)
        entered = cell != robot.cell
        robot.cell = cell

        sensed = total_radiation(world, cell, robot.rng)
        if per_step or entered:
            level = float(world.truth[cell.x, cell.y]) if use_truth else sensed
            if sample_failure(failure_probability(level), robot.rng):
                _fail(sim, robot)
                continue
        if robot.r_map is not None:
            robot.r_map.vput(cell, sensed)
        robot.e_map.vput(cell, float(t))
        sim.explored.add(cell)

    reachable = _reachability(sim) if config.comm_radius > 0 else None
    for name in sorted(sim.buses):
        sim.buses[name].flush(sim.bus_rng, reachable)

    ops, sent = {}, {}
    for robot in sim.robots:
        reads = writes = nbytes = 0
        for rep in robot.replicas:
            r, w, b = rep.account()
            reads += r
            writes += w
            nbytes += b
        if robot.active:
            ops[robot.id] = reads + writes
            sent[robot.id] = nbytes
    n_active = len(ops)
    record = MetricsRecord(
        tick=t,
        active_robots=n_active,
        explored_cells=len(sim.explored),
        bytes_per_robot=sum(sent.values()) / n_active if n_active else 0.0,
        stig_ops_per_robot=sum(ops.values()) / n_active if n_active else 0.0,
    )
    if sim.trace:
        prev = sim.trace[-1]
        if record.active_robots > prev.active_robots or record.explored_cells < prev.explored_cells:
            raise InvariantError(f"metric monotonicity violated at tick {t}: {prev} -> {record}")
    for robot in sim.robots:
        if robot.cell in world.obstacles:
            raise InvariantError(f"robot {robot.id} inside obstacle {robot.cell} at tick {t}")
    sim.trace.append(record)
    sim.ops_log.append(ops)
    sim.bytes_log.append(sent)
    return sim


def _reachability(sim: SimState):
    radius = sim.config.comm_radius * sim.world.cell_size
    pos = {r.id: r.position for r in sim.robots}

    def reachable(a: int, b: int) -> bool:
        (ax, ay), (bx, by) = pos[a], pos[b]
        return (ax - bx) ** 2 + (ay - by) ** 2 <= radius * radius

    return reachable


def run(config: SimConfig) -> RunResult:
    sim = init_run(config)
    for _ in range(config.steps):
        tick(sim)
    r_table = merged_table(r.r_map for r in sim.robots if r.r_map is not None)
    e_table = merged_table(r.e_map for r in sim.robots if r.e_map is not None)
    return RunResult(
        config=config,
        world=sim.world,
        trace=sim.trace,
        r_table=r_table,
        e_table=e_table,
        robots=sim.robots,
        ops_log=sim.ops_log,
        bytes_log=sim.bytes_log,
    )


@dataclass
class RunSummary:
    """The parts of a run a batch keeps (picklable, no RNG state)."""

    seed: int
    trace: list[MetricsRecord]
    world_digest: str

    @property
    def final(self) -> MetricsRecord:
        return self.trace[-1]


def _run_summary(config: SimConfig) -> RunSummary:
    result = run(config)
    return RunSummary(config.seed, result.trace, result.world_digest)


@dataclass
class BatchResult:
    config: SimConfig
    runs: list[RunSummary]
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]

    def final_values(self, name: str) -> np.ndarray:
        return np.array([getattr(run.final, name) for run in self.runs], dtype=float)

    def aggregate_rows(self) -> list[str]:
        header = ["tick"]
        for name in METRIC_FIELDS:
            header += [f"{name}_mean", f"{name}_std"]
        rows = [",".join(header)]
        ticks = len(next(iter(self.mean.values())))
        for i in range(ticks):
            cells = [str(i + 1)]
            for name in METRIC_FIELDS:
                cells += [repr(float(self.mean[name][i])), repr(float(self.std[name][i]))]
            rows.append(",".join(cells))
        return rows


def aggregate(runs: list[RunSummary]) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    mean, std = {}, {}
    for name in METRIC_FIELDS:
        values = np.array([[getattr(rec, name) for rec in run.trace] for run in runs], dtype=float)
        mean[name] = values.mean(axis=0)
        std[name] = values.std(axis=0)
    return mean, std


def batch(config: SimConfig, n_runs: int, seed_base: int | None = None, jobs: int = 1) -> BatchResult:
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")
    seed_base = config.seed if seed_base is None else seed_base
    configs = [config.replace(seed=seed_base + i).validate() for i in range(n_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_summary, configs))
    else:
        runs = [_run_summary(c) for c in configs]
    mean, std = aggregate(runs)
    return BatchResult(config, runs, mean, std)
