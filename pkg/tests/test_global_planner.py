import heapq
import math

import numpy as np
import pytest

from mmbench.core_types import Pose2D, RobotSpec
from mmbench.global_planner import (NoPath, grid_path, inflate, line_of_sight, plan, segment_cells,
                                    shortcut)
from mmbench.world_sim import Circle, Obstacle, OccupancyGrid

SQ2 = math.sqrt(2)


def dijkstra(cells, s, g):
    """Uniform-cost search, 8-connected, no corner cutting."""
    H, W = cells.shape
    dist = {s: 0.0}
    pq = [(0.0, s)]
    while pq:
        d, (x, y) = heapq.heappop(pq)
        if (x, y) == g:
            return d
        if d > dist[(x, y)]:
            continue
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == dy == 0:
                    continue
                nx, ny = x + dx, y + dy
                if not (0 <= nx < W and 0 <= ny < H) or cells[ny, nx]:
                    continue
                if dx and dy and (cells[y, nx] or cells[ny, x]):
                    continue
                nd = d + (SQ2 if dx and dy else 1.0)
                if nd < dist.get((nx, ny), math.inf):
                    dist[(nx, ny)] = nd
                    heapq.heappush(pq, (nd, (nx, ny)))
    return math.inf


def test_inflate_zero_is_identity():
    g = OccupancyGrid(0.1, 10, 10)
    g.cells[5, 5] = True
    assert np.array_equal(inflate(g, 0.0).cells, g.cells)


def test_inflate_unit_disc():
    g = OccupancyGrid(0.1, 5, 5)
    g.cells[2, 2] = True
    want = np.zeros((5, 5), dtype=bool)
    want[2, 2] = want[1, 2] = want[3, 2] = want[2, 1] = want[2, 3] = True
    assert np.array_equal(inflate(g, 0.1).cells, want)


def test_inflate_random_matches_brute_force():
    rng = np.random.default_rng(0)
    g = OccupancyGrid(0.1, 30, 25, cells=rng.random((25, 30)) < 0.03)
    r = 0.27
    occ = np.argwhere(g.cells)
    want = np.zeros_like(g.cells)
    for iy in range(25):
        for ix in range(30):
            want[iy, ix] = np.any(np.hypot(occ[:, 0] - iy, occ[:, 1] - ix) * 0.1 <= r + 1e-9)
    assert np.array_equal(inflate(g, r).cells, want)


def test_plan_straight_corridor():
    spec = RobotSpec(footprint_radius=0.2)
    g = OccupancyGrid(0.1, 80, 20)
    p = plan(g, Pose2D(1.0, 1.0), Pose2D(6.0, 1.0), spec)
    assert p.length == pytest.approx(5.0, abs=0.1)
    assert p.n == 2


def test_plan_endpoints_are_cell_centres_and_heading():
    g = OccupancyGrid(0.1, 50, 50)
    p = plan(g, Pose2D(1.03, 1.07), Pose2D(4.01, 3.33, 0.4), RobotSpec(footprint_radius=0.2))
    np.testing.assert_allclose(p.xy[0], [1.05, 1.05])
    np.testing.assert_allclose(p.xy[-1], [4.05, 3.35])
    assert p.waypoints[-1, 2] == pytest.approx(0.4)


def test_goal_inside_inflated_obstacle_raises():
    g = OccupancyGrid.from_obstacles([Obstacle(Circle(3, 3, 0.3))], 6, 6, 0.1)
    with pytest.raises(NoPath):
        plan(g, Pose2D(1, 1), Pose2D(3.5, 3.0), RobotSpec())


def test_unreachable_goal_raises():
    g = OccupancyGrid(0.1, 60, 20)
    g.cells[:, 30] = True
    with pytest.raises(NoPath):
        plan(g, Pose2D(1, 1), Pose2D(5, 1), RobotSpec(footprint_radius=0.1))


def test_astar_cost_equals_dijkstra_on_random_maps():
    rng = np.random.default_rng(42)
    for _ in range(25):
        cells = rng.random((40, 40)) < 0.25
        cells[0, 0] = cells[39, 39] = False
        g = OccupancyGrid(1.0, 40, 40, cells=cells)
        _, cost = grid_path(g, (0, 0), (39, 39))
        want = dijkstra(cells, (0, 0), (39, 39))
        assert cost == pytest.approx(want, abs=1e-9) if math.isfinite(want) else cost == math.inf


def test_segment_cells_contains_dense_samples():
    g = OccupancyGrid(0.1, 50, 50)
    rng = np.random.default_rng(7)
    for _ in range(50):
        a, b = rng.uniform(0.01, 4.99, 2), rng.uniform(0.01, 4.99, 2)
        cells = set(segment_cells(g, a, b))
        for u in np.linspace(0, 1, 2000):
            p = a + u * (b - a)
            assert (int(p[0] // 0.1), int(p[1] // 0.1)) in cells


def test_shortcut_never_crosses_obstacles_and_shortens():
    rng = np.random.default_rng(5)
    spec = RobotSpec(footprint_radius=0.15)
    for _ in range(10):
        obs = [Obstacle(Circle(*rng.uniform(1, 7, 2), rng.uniform(0.2, 0.6))) for _ in range(6)]
        g = OccupancyGrid.from_obstacles(obs, 8, 8, 0.1)
        try:
            p = plan(g, Pose2D(0.4, 0.4), Pose2D(7.6, 7.6), spec)
        except NoPath:
            continue
        infl = inflate(g, spec.footprint_radius + 0.05)
        for a, b in zip(p.xy[:-1], p.xy[1:]):
            assert line_of_sight(infl, a, b)
        cells, cost = grid_path(infl, infl.cell_of(0.4, 0.4), infl.cell_of(7.6, 7.6))
        assert p.length <= cost * 0.1 + 1e-9


def test_shortcut_keeps_two_points():
    g = OccupancyGrid(0.1, 10, 10)
    pts = [(0.05, 0.05), (0.45, 0.45)]
    assert shortcut(g, pts) == pts


def test_escape_radius_leaves_inflation():
    g = OccupancyGrid.from_obstacles([Obstacle(Circle(2.0, 2.0, 0.3))], 6, 6, 0.1)
    start = Pose2D(2.0, 2.62)  # inside the inflation ring, outside the obstacle
    with pytest.raises(NoPath):
        plan(g, start, Pose2D(5, 5), RobotSpec())
    p = plan(g, start, Pose2D(5, 5), RobotSpec(), escape_radius=0.6)
    assert p.n >= 2


def test_point_at_and_densify():
    g = OccupancyGrid(0.1, 50, 50)
    p = plan(g, Pose2D(0.5, 0.5), Pose2D(3.5, 0.5), RobotSpec(footprint_radius=0.1))
    x, y, h = p.point_at(1.0)
    assert (x, y, h) == pytest.approx((1.55, 0.55, 0.0))
    pts, s = p.densify(0.25)
    assert s[-1] == pytest.approx(p.length)
    np.testing.assert_allclose(np.diff(s), np.diff(s)[0])
