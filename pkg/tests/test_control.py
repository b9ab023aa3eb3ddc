import itertools
import math
import random
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dora_sim.control import (
    EXPLORED,
    FRONTIER,
    MOORE,
    UNEXPLORED,
    ControlGains,
    FrontierMap,
    MovementCommand,
    Neighborhood,
    apply_control,
    classify_cells,
    dora_step,
    fbe_step,
    local_gradient,
    obstacle_avoidance,
    random_walk_step,
)
from dora_sim.stigmergy import StigmergyReplica

NO_PROXIMITY = [0.0] * 8


def brute_gradient(patch: np.ndarray) -> tuple[float, float]:
    """Independent evaluation on a 3x3 array indexed [dx + 1, dy + 1]."""
    gx = gy = 0.0
    center = patch[1, 1]
    for i in range(3):
        for j in range(3):
            dx, dy = i - 1, j - 1
            if dx == dy == 0:
                continue
            norm = math.sqrt(dx * dx + dy * dy)
            gx += (center - patch[i, j]) * dx / norm
            gy += (center - patch[i, j]) * dy / norm
    return gx, gy


def as_mapping(patch: np.ndarray, cx=4, cy=7) -> dict:
    return {(cx + i - 1, cy + j - 1): float(patch[i, j]) for i in range(3) for j in range(3)}


def test_gradient_matches_brute_force_on_random_patches():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10_000):
        patch = rng.uniform(-1, 1, (3, 3)) * 10 ** rng.uniform(-3, 3)
        got = local_gradient(as_mapping(patch), (4, 7))
        want = brute_gradient(patch)
        worst = max(worst, abs(got[0] - want[0]), abs(got[1] - want[1]))
    assert worst <= 1e-12


def test_gradient_missing_cells_default():
    values = {(0, 0): 1.0}
    gx, gy = local_gradient(values, (0, 0), missing_default=0.0)
    assert (gx, gy) == pytest.approx((0.0, 0.0), abs=1e-12)  # symmetric pull cancels
    values[(1, 0)] = 3.0
    gx, gy = local_gradient(values, (0, 0))
    # east contributes -2, the other seven sum to -1 along x
    assert gx == pytest.approx(-3.0) and gy == pytest.approx(0.0, abs=1e-12)


def test_gradient_single_hot_neighbour():
    values = {(0, 0): 0.0, (1, 0): 0.6}
    assert local_gradient(values, (0, 0)) == pytest.approx((-0.6, 0.0), abs=1e-12)


def test_gradient_missing_default_matching_center():
    assert local_gradient({(0, 0): 0.4}, (0, 0), missing_default=0.4) == (0.0, 0.0)


def test_gradient_flat_field_is_zero():
    values = {(x, y): 0.7 for x in range(3) for y in range(3)}
    assert local_gradient(values, (1, 1)) == pytest.approx((0.0, 0.0), abs=1e-15)


SIGNS = (-1, 0, 1)


@pytest.mark.parametrize("sx, sy", list(itertools.product(SIGNS, SIGNS)))
def test_gradient_opposes_monotone_fields(sx, sy):
    rng = random.Random(sx * 3 + sy)
    for _ in range(200):
        # strictly monotone per-axis profiles with random step sizes
        xs = np.cumsum([rng.uniform(0.01, 2) for _ in range(3)]) * sx
        ys = np.cumsum([rng.uniform(0.01, 2) for _ in range(3)]) * sy
        patch = xs[:, None] + ys[None, :]
        gx, gy = local_gradient(as_mapping(patch), (4, 7))
        for g, s in ((gx, sx), (gy, sy)):
            if s == 0:
                assert abs(g) < 1e-12
            else:
                assert math.copysign(1, g) == -s


def test_gradient_never_points_uphill_over_all_sign_patterns():
    # neighbor value = center + sign; exhaustive over the 3^8 patterns
    for pattern in itertools.product(SIGNS, repeat=8):
        values = {(0, 0): 0.0}
        for (dx, dy), s in zip(MOORE, pattern):
            values[(dx, dy)] = float(s)
        gx, gy = local_gradient(values, (0, 0))
        up = [(dx / math.hypot(dx, dy), dy / math.hypot(dx, dy))
              for (dx, dy), s in zip(MOORE, pattern) if s > 0]
        down = [(dx / math.hypot(dx, dy), dy / math.hypot(dx, dy))
                for (dx, dy), s in zip(MOORE, pattern) if s < 0]
        ux, uy = sum(u[0] for u in up), sum(u[1] for u in up)
        vx, vy = sum(u[0] for u in down), sum(u[1] for u in down)
        # the gradient is exactly (sum of downhill units) - (sum of uphill units)
        assert (gx, gy) == pytest.approx((vx - ux, vy - uy), abs=1e-12)
        if not down:
            assert gx * ux + gy * uy == pytest.approx(-(ux * ux + uy * uy), abs=1e-12)
            assert gx * ux + gy * uy <= 1e-12
        if not up:
            assert gx * vx + gy * vy >= -1e-12


def test_neighborhood_validation():
    with pytest.raises(ValueError):
        Neighborhood(((0, 0), (1, 0)))
    with pytest.raises(ValueError):
        Neighborhood(((1, 0), (1, 0)))
    von_neumann = Neighborhood(((1, 0), (0, 1), (-1, 0), (0, -1)))
    assert local_gradient({(1, 0): 1.0}, (0, 0), von_neumann) == pytest.approx((-1.0, 0.0))


def test_gains_validation():
    with pytest.raises(ValueError):
        ControlGains(k=0)
    with pytest.raises(ValueError):
        ControlGains(alpha=-1)


def test_obstacle_avoidance_pushes_away():
    front = [1.0] + [0.0] * 7
    assert obstacle_avoidance(front, 0.0) == pytest.approx((-1.0, 0.0))
    # same body-frame reading with the robot facing north pushes south
    assert obstacle_avoidance(front, math.pi / 2) == pytest.approx((0.0, -1.0), abs=1e-12)
    assert obstacle_avoidance(NO_PROXIMITY, 1.0) == (0.0, 0.0)


def test_obstacle_avoidance_symmetric_sides_cancel_laterally():
    sides = [0.0, 0.0, 0.6, 0.0, 0.0, 0.0, 0.6, 0.0]
    assert obstacle_avoidance(sides, 0.0)[1] == pytest.approx(0.0, abs=1e-12)


def test_apply_control_diagonal():
    (x, y), _ = apply_control((0.0, 0.0), MovementCommand((1.0, 1.0)), 0.2, 0.0)
    assert x == pytest.approx(0.2 / math.sqrt(2), abs=1e-9)
    assert y == pytest.approx(0.2 / math.sqrt(2), abs=1e-9)
    (x, y), _ = apply_control((5.0, 5.0), MovementCommand((3.0, 0.0)), 0.2, 0.0)
    assert (x, y) == pytest.approx((5.2, 5.0))


def test_apply_control_moves_exactly_k():
    (x, y), heading = apply_control((1.0, 1.0), MovementCommand((3.0, 4.0)), 0.5, 0.0)
    assert (x, y) == pytest.approx((1.3, 1.4))
    assert heading == pytest.approx(math.atan2(4, 3))
    (x, y), heading = apply_control((1.0, 1.0), MovementCommand((0.0, 0.0), True), 0.2, math.pi)
    assert (x, y) == pytest.approx((0.8, 1.0))
    assert heading == math.pi


def robot_at(cell, heading=0.0, size=1.0):
    return SimpleNamespace(cell=cell, heading=heading,
                           position=((cell[0] + 0.5) * size, (cell[1] + 0.5) * size))


def test_dora_step_moves_away_from_radiation():
    r_map, e_map = StigmergyReplica(0), StigmergyReplica(0)
    r_map.vput((5, 5), 0.2)
    r_map.vput((6, 5), 0.9)
    for x in range(4, 7):
        for y in range(4, 7):
            e_map.vput((x, y), 1.0)
    cmd = dora_step(robot_at((5, 5)), r_map, e_map, NO_PROXIMITY, ControlGains(), t=1)
    assert cmd.vector[0] < 0 and not cmd.fallback_forward


def test_dora_step_prefers_stale_cells():
    r_map, e_map = StigmergyReplica(0), StigmergyReplica(0)
    for x in range(4, 7):
        for y in range(4, 7):
            e_map.vput((x, y), 50.0)
    e_map.table.pop((5, 6))  # never visited: reads as 0, i.e. oldest
    cmd = dora_step(robot_at((5, 5)), r_map, e_map, NO_PROXIMITY, ControlGains(), t=50)
    assert cmd.vector[1] > 0 and abs(cmd.vector[0]) < 1e-12


def test_dora_step_counts_sixteen_reads():
    r_map, e_map = StigmergyReplica(0), StigmergyReplica(1)
    dora_step(robot_at((2, 2)), r_map, e_map, NO_PROXIMITY, ControlGains())
    assert r_map.reads + e_map.reads == 16


def test_dora_step_stagnation_fallback():
    r_map, e_map = StigmergyReplica(0), StigmergyReplica(0)
    cmd = dora_step(robot_at((2, 2)), r_map, e_map, NO_PROXIMITY, ControlGains())
    assert cmd.fallback_forward


def test_dora_step_blocked_neighbours_are_neutral():
    r_map, e_map = StigmergyReplica(0), StigmergyReplica(0)
    for x in range(0, 3):
        for y in range(0, 3):
            e_map.vput((x, y), 10.0)
    # at a corner the out-of-bounds cells must not look like unvisited cells
    cmd = dora_step(robot_at((0, 0)), r_map, e_map, NO_PROXIMITY, ControlGains(), t=10,
                    blocked=lambda c: c[0] < 0 or c[1] < 0)
    assert cmd.fallback_forward


def test_classify_cells():
    labels = classify_cells({(0, 0), (1, 0), (0, 1), (1, 1)}, 3, 2, blocked={(2, 1)})
    assert labels[(0, 0)] == EXPLORED and labels[(0, 1)] == EXPLORED
    assert labels[(1, 0)] == FRONTIER and labels[(1, 1)] == FRONTIER
    assert labels[(2, 0)] == UNEXPLORED
    assert (2, 1) not in labels


def test_classify_cells_edge_cases():
    assert set(classify_cells(set(), 3, 3).values()) == {UNEXPLORED}
    assert classify_cells({(1, 1)}, 3, 3)[(1, 1)] == FRONTIER
    full = {(x, y) for x in range(3) for y in range(3)}
    assert FRONTIER not in classify_cells(full, 3, 3).values()


def test_frontier_targets_border_explored_region():
    fm = FrontierMap(4, 4)
    targets = fm.update({(0, 0): None, (1, 0): None}, set())
    assert {tuple(map(int, t)) for t in targets} == {(2, 0), (0, 1), (1, 1), (2, 1)}
    targets = fm.update({(0, 0): None, (1, 0): None, (0, 1): None}, {(2, 0)})
    assert (2, 0) not in {tuple(map(int, t)) for t in targets}


@given(st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30))
def test_frontier_targets_agree_with_classification(explored):
    targets = {tuple(map(int, t)) for t in FrontierMap(6, 6).update(dict.fromkeys(explored), set())}
    labels = classify_cells(explored, 6, 6)
    frontier = {c for c, lab in labels.items() if lab == FRONTIER}
    # every frontier cell has a target next to it, and every target touches the frontier
    for fx, fy in frontier:
        assert any((fx + dx, fy + dy) in targets for dx, dy in MOORE)
    for tx, ty in targets:
        assert labels[(tx, ty)] == UNEXPLORED
        assert any((tx + dx, ty + dy) in frontier for dx, dy in MOORE)


def test_fbe_step_heads_to_nearest_target():
    e_map = StigmergyReplica(0)
    for x in range(0, 3):
        e_map.vput((x, 0), 1.0)
    cmd = fbe_step(robot_at((1, 0)), e_map, NO_PROXIMITY, ControlGains(), FrontierMap(5, 5))
    assert cmd.vector == pytest.approx((0.0, 1.0))  # (1, 1) is straight above
    assert e_map.reads == 8


def test_fbe_step_breaks_ties_towards_lowest_y_then_x():
    # explored column x = 2 on a 5-wide, 1-tall strip: (1, 0) and (3, 0) are equidistant
    e_map = StigmergyReplica(0)
    e_map.vput((2, 0), 1.0)
    cmd = fbe_step(robot_at((2, 0)), e_map, NO_PROXIMITY, ControlGains(), FrontierMap(5, 1))
    assert cmd.vector == pytest.approx((-1.0, 0.0))
    e_map = StigmergyReplica(0)
    e_map.vput((1, 1), 1.0)
    cmd = fbe_step(robot_at((1, 1)), e_map, NO_PROXIMITY, ControlGains(), FrontierMap(3, 3))
    assert cmd.vector == pytest.approx((0.0, -1.0))  # (1, 0) beats (0, 1), (2, 1) and (1, 2)


def test_fbe_step_without_targets_goes_forward():
    e_map = StigmergyReplica(0)
    e_map.vput((0, 0), 1.0)
    cmd = fbe_step(robot_at((0, 0)), e_map, NO_PROXIMITY, ControlGains(), FrontierMap(1, 1))
    assert cmd.fallback_forward


def test_random_walk_turn_rate():
    rng = random.Random(0)
    robot = robot_at((0, 0), heading=0.0)
    n = 20_000
    turns = sum(random_walk_step(robot, NO_PROXIMITY, ControlGains(), rng, 0.2).vector != (1.0, 0.0)
                for _ in range(n))
    assert abs(turns / n - 0.2) <= 3 * math.sqrt(0.2 * 0.8 / n)


def test_random_walk_never_turns_with_zero_probability():
    robot = robot_at((0, 0), heading=1.0)
    cmd = random_walk_step(robot, NO_PROXIMITY, ControlGains(), random.Random(1), 0.0)
    assert cmd.vector == pytest.approx((math.cos(1.0), math.sin(1.0)))


def test_random_walk_full_turn_headings_are_uniform():
    rng = random.Random(2)
    robot = robot_at((0, 0))
    n = 100_000
    cs = sn = 0.0
    for _ in range(n):
        vx, vy = random_walk_step(robot, NO_PROXIMITY, ControlGains(), rng, 1.0).vector
        cs += vx
        sn += vy
    # resultant length of n uniform angles is about 1 / sqrt(n)
    assert math.hypot(cs, sn) / n < 4 / math.sqrt(n)


def test_random_walk_obstacle_ahead_slows_command():
    ahead = [1.0] + [0.0] * 7
    cmd = random_walk_step(robot_at((0, 0)), ahead, ControlGains(), random.Random(0), 0.0)
    assert math.hypot(*cmd.vector) < 1.0
