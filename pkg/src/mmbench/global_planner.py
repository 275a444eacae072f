"""Grid A* global planner with costmap inflation and line-of-sight shortcutting."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt

from .core_types import Pose2D, RobotSpec, normalize_angle
from .world_sim import OccupancyGrid

INFLATION_MARGIN = 0.05
SQRT2 = math.sqrt(2.0)

# 8-connected moves: (dx, dy, unit cost)
_MOVES = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2)]


class NoPath(RuntimeError):
    pass


@dataclass(frozen=True)
class GlobalPath:
    waypoints: np.ndarray  # (n, 3): x, y, heading

    @property
    def n(self) -> int:
        return len(self.waypoints)

    @property
    def xy(self) -> np.ndarray:
        return self.waypoints[:, :2]

    @property
    def cumulative_length(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.xy, axis=0).T) if self.n > 1 else np.zeros(0)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def length(self) -> float:
        return float(self.cumulative_length[-1])

    @property
    def goal(self) -> Pose2D:
        return Pose2D(*self.waypoints[-1])

    def poses(self) -> list[Pose2D]:
        return [Pose2D(*w) for w in self.waypoints]

    def point_at(self, s: float) -> tuple[float, float, float]:
        """Position and segment heading at arc length ``s`` (clamped)."""
        cum = self.cumulative_length
        if self.n == 1 or s <= 0.0:
            i = 0
        else:
            i = min(int(np.searchsorted(cum, s, side="right")) - 1, self.n - 2)
        if self.n == 1:
            return tuple(self.waypoints[0])
        s = min(max(s, 0.0), cum[-1])
        a, b = self.xy[i], self.xy[i + 1]
        seg = cum[i + 1] - cum[i]
        u = (s - cum[i]) / seg if seg > 0 else 0.0
        p = a + u * (b - a)
        return float(p[0]), float(p[1]), math.atan2(b[1] - a[1], b[0] - a[0])

    def densify(self, step: float) -> tuple[np.ndarray, np.ndarray]:
        """Points every ``step`` meters (endpoints kept) and their arc lengths."""
        L = self.length
        k = max(int(math.ceil(L / step)), 1)
        s = np.linspace(0.0, L, k + 1)
        cum = self.cumulative_length
        if self.n == 1:
            return np.repeat(self.xy, len(s), axis=0), s
        x = np.interp(s, cum, self.xy[:, 0])
        y = np.interp(s, cum, self.xy[:, 1])
        return np.column_stack([x, y]), s


def inflate(grid: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Mark every cell whose centre lies within ``radius`` of an occupied cell centre."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    out = grid.copy()
    if radius == 0 or not grid.cells.any():
        return out
    dist = distance_transform_edt(~grid.cells) * grid.resolution
    out.cells = dist <= radius + 1e-9
    return out


def _astar(grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int]):
    """8-connected A* with the octile heuristic; no corner cutting."""
    cells = grid.cells
    W, H = grid.width, grid.height
    gx, gy = goal

    def h(ix, iy):
        dx, dy = abs(ix - gx), abs(iy - gy)
        return (dx + dy) + (SQRT2 - 2.0) * min(dx, dy)

    g = {start: 0.0}
    parent = {start: None}
    heap = [(h(*start), 0.0, start)]
    closed = set()
    while heap:
        _, gc, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            break
        closed.add(cur)
        cx, cy = cur
        for dx, dy, w in _MOVES:
            nx, ny = cx + dx, cy + dy
            if not (0 <= nx < W and 0 <= ny < H) or cells[ny, nx]:
                continue
            if dx and dy and (cells[cy, nx] or cells[ny, cx]):
                continue
            ng = gc + w
            nb = (nx, ny)
            if ng < g.get(nb, math.inf) - 1e-12:
                g[nb] = ng
                parent[nb] = cur
                heapq.heappush(heap, (ng + h(nx, ny), ng, nb))
    if goal not in parent:
        return None, math.inf
    path = []
    node = goal
    while node is not None:
        path.append(node)
        node = parent[node]
    return path[::-1], g[goal]


def grid_path(grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int]):
    """Raw A* cell path and its cost in cell units (``None, inf`` if unreachable)."""
    if grid.occupied(*start) or grid.occupied(*goal):
        return None, math.inf
    return _astar(grid, start, goal)


def segment_cells(grid: OccupancyGrid, a: tuple[float, float], b: tuple[float, float]):
    """All cells touched by the segment a-b (supercover traversal).

    When the segment passes exactly through a cell corner, both side cells
    are included so that diagonal squeezes count as blocked.
    """
    res = grid.resolution
    x0 = (a[0] - grid.origin.x) / res
    y0 = (a[1] - grid.origin.y) / res
    x1 = (b[0] - grid.origin.x) / res
    y1 = (b[1] - grid.origin.y) / res
    ix, iy = int(math.floor(x0)), int(math.floor(y0))
    ex, ey = int(math.floor(x1)), int(math.floor(y1))
    dx, dy = x1 - x0, y1 - y0
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    tdx = abs(1.0 / dx) if dx != 0 else math.inf
    tdy = abs(1.0 / dy) if dy != 0 else math.inf
    if dx > 0:
        tmx = (math.floor(x0) + 1 - x0) * tdx
    elif dx < 0:
        tmx = (x0 - math.floor(x0)) * tdx
    else:
        tmx = math.inf
    if dy > 0:
        tmy = (math.floor(y0) + 1 - y0) * tdy
    elif dy < 0:
        tmy = (y0 - math.floor(y0)) * tdy
    else:
        tmy = math.inf
    out = [(ix, iy)]
    n = abs(ex - ix) + abs(ey - iy)
    guard = 0
    while (ix, iy) != (ex, ey) and guard <= n + 2:
        guard += 1
        if abs(tmx - tmy) < 1e-12:
            out.append((ix + sx, iy))
            out.append((ix, iy + sy))
            ix += sx
            iy += sy
            tmx += tdx
            tmy += tdy
        elif tmx < tmy:
            ix += sx
            tmx += tdx
        else:
            iy += sy
            tmy += tdy
        out.append((ix, iy))
    return out


def line_of_sight(grid: OccupancyGrid, a, b) -> bool:
    return not any(grid.occupied(ix, iy) for ix, iy in segment_cells(grid, a, b))


def shortcut(grid: OccupancyGrid, pts: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Greedy farthest-visible-waypoint simplification."""
    if len(pts) <= 2:
        return list(pts)
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not line_of_sight(grid, pts[i], pts[j]):
            j -= 1
        out.append(pts[j])
        i = j
    return out


def _nearest_free(grid: OccupancyGrid, cell: tuple[int, int], max_cells: int):
    cx, cy = cell
    best = None
    for r in range(1, max_cells + 1):
        for ix in range(cx - r, cx + r + 1):
            for iy in range(cy - r, cy + r + 1):
                if max(abs(ix - cx), abs(iy - cy)) != r or grid.occupied(ix, iy):
                    continue
                d = (ix - cx) ** 2 + (iy - cy) ** 2
                if best is None or d < best[0]:
                    best = (d, (ix, iy))
        if best is not None:
            return best[1]
    return None


def plan(grid: OccupancyGrid, start: Pose2D, goal: Pose2D, spec: RobotSpec,
         inflation: float | None = None, escape_radius: float = 0.0) -> GlobalPath:
    """Shortest inflated-grid path from start to goal, simplified by shortcutting.

    ``escape_radius`` lets a start that sits inside the inflation zone (for
    example a robot halted next to a freshly sensed obstacle) leave through
    the nearest free cell within that distance.
    """
    if inflation is None:
        inflation = spec.footprint_radius + INFLATION_MARGIN
    inflated = inflate(grid, inflation)
    s = inflated.cell_of(start.x, start.y)
    g = inflated.cell_of(goal.x, goal.y)
    if inflated.occupied(*g):
        raise NoPath("goal lies inside an inflated obstacle")
    prefix = []
    if inflated.occupied(*s):
        if escape_radius <= 0 or not inflated.in_bounds(*s) or grid.occupied(*s):
            raise NoPath("start lies inside an inflated obstacle")
        free = _nearest_free(inflated, s, int(math.ceil(escape_radius / grid.resolution)))
        if free is None:
            raise NoPath("no free cell near start")
        prefix = [s]
        s = free
    cells, _ = _astar(inflated, s, g)
    if cells is None:
        raise NoPath("goal unreachable on the inflated map")
    cells = prefix + cells
    cx, cy = inflated.center([c[0] for c in cells], [c[1] for c in cells])
    pts = list(zip(cx.tolist(), cy.tolist()))
    if prefix:
        pts = pts[:1] + shortcut(inflated, pts[1:])
    else:
        pts = shortcut(inflated, pts)
    # drop duplicates (start and goal in the same cell)
    dedup = [pts[0]]
    for p in pts[1:]:
        if p != dedup[-1]:
            dedup.append(p)
    return make_path(dedup, goal.theta)


def make_path(points, final_heading: float) -> GlobalPath:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    heads = np.empty(len(pts))
    if len(pts) > 1:
        d = np.diff(pts, axis=0)
        heads[:-1] = np.arctan2(d[:, 1], d[:, 0])
    heads[-1] = normalize_angle(final_heading)
    return GlobalPath(np.column_stack([pts, heads]))
