"""
Cuboid obstacle model and line-of-sight checks.

Buildings are axis-aligned boxes standing on the ground plane. A UAV/user
segment is blocked when it crosses one of the four vertical side faces of
any box; roofs are not tested (users below a roof line are rejected when a
scenario is loaded).
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"Point3 coordinates must be finite, got ({self.x}, {self.y}, {self.z})")
        if self.z < 0:
            raise ValueError(f"Point3.z must be >= 0, got {self.z}")

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class Cuboid:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    height: float
    id: str = ''

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise ValueError(f"cuboid {self.id!r}: x_min < x_max required")
        if not (self.y_min < self.y_max):
            raise ValueError(f"cuboid {self.id!r}: y_min < y_max required")
        if not (self.height > 0):
            raise ValueError(f"cuboid {self.id!r}: height > 0 required")

    def upper_vertices(self) -> List[Point3]:
        """The four roof corners, counter-clockwise from (x_min, y_min)."""
        h = self.height
        return [
            Point3(self.x_min, self.y_min, h),
            Point3(self.x_max, self.y_min, h),
            Point3(self.x_max, self.y_max, h),
            Point3(self.x_min, self.y_max, h),
        ]

    @property
    def footprint_area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


def _box_arrays(cuboids: Iterable[Cuboid]) -> np.ndarray:
    rows = [(c.x_min, c.x_max, c.y_min, c.y_max, c.height) for c in cuboids]
    return np.array(rows, dtype=np.float64).reshape(-1, 5)


@dataclass(frozen=True)
class ObstacleMap:
    cuboids: Tuple[Cuboid, ...] = ()
    bounds: Optional[Tuple[float, float, float, float]] = None  # x_min, x_max, y_min, y_max
    _boxes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cuboids = tuple(self.cuboids)
        object.__setattr__(self, 'cuboids', cuboids)
        if self.bounds is None:
            if cuboids:
                bounds = (min(c.x_min for c in cuboids), max(c.x_max for c in cuboids),
                          min(c.y_min for c in cuboids), max(c.y_max for c in cuboids))
            else:
                bounds = (0.0, 0.0, 0.0, 0.0)
            object.__setattr__(self, 'bounds', bounds)
        else:
            object.__setattr__(self, 'bounds', tuple(float(v) for v in self.bounds))
            bx0, bx1, by0, by1 = self.bounds
            for c in cuboids:
                if c.x_min < bx0 or c.x_max > bx1 or c.y_min < by0 or c.y_max > by1:
                    raise ValueError(f"cuboid {c.id!r} lies outside the map bounds {self.bounds}")
        boxes = _box_arrays(cuboids)
        boxes.setflags(write=False)
        object.__setattr__(self, '_boxes', boxes)

    def __len__(self) -> int:
        return len(self.cuboids)

    @property
    def boxes(self) -> np.ndarray:
        """(N_b, 5) read-only array of x_min, x_max, y_min, y_max, height."""
        return self._boxes

    @property
    def tallest(self) -> float:
        return max((c.height for c in self.cuboids), default=0.0)


def segment_face_hits(a: np.ndarray, b: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """
    Side-face crossing test between segments and boxes.

    Args:
        a, b: segment endpoints, shape (..., 3)
        boxes: (N, 5) array as in ObstacleMap.boxes

    Returns:
        Boolean array of shape (..., N); True where the segment crosses a
        side face of that box. Segments parallel to a face plane never hit it;
        the crossing parameter and face rectangle are both closed.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ax, ay, az = a[..., 0, None], a[..., 1, None], a[..., 2, None]
    dx = b[..., 0, None] - ax
    dy = b[..., 1, None] - ay
    dz = b[..., 2, None] - az
    x_min, x_max, y_min, y_max, height = (boxes[:, k] for k in range(5))

    hit = np.zeros(np.broadcast_shapes(ax.shape, x_min.shape), dtype=bool)
    with np.errstate(divide='ignore', invalid='ignore'):
        # faces at constant y (xz-plane)
        for y_face in (y_min, y_max):
            t = (y_face - ay) / dy
            x = ax + t * dx
            z = az + t * dz
            hit |= ((dy != 0) & (t >= 0) & (t <= 1)
                    & (x >= x_min) & (x <= x_max) & (z >= 0) & (z <= height))
        # faces at constant x (yz-plane)
        for x_face in (x_min, x_max):
            t = (x_face - ax) / dx
            y = ay + t * dy
            z = az + t * dz
            hit |= ((dx != 0) & (t >= 0) & (t <= 1)
                    & (y >= y_min) & (y <= y_max) & (z >= 0) & (z <= height))
    return hit


def intersects_cuboid(a: Point3, b: Point3, c: Cuboid) -> bool:
    """True iff the segment a-b crosses one of c's four side faces."""
    hits = segment_face_hits(np.array(a.as_tuple()), np.array(b.as_tuple()), _box_arrays([c]))
    return bool(hits[0])


def los_mask(uav_points: np.ndarray, user: Point3, obstacle_map: ObstacleMap) -> np.ndarray:
    """
    Vectorised LoS for many UAV positions against one user.

    Returns a boolean array, True where the line of sight is clear.
    """
    uav_points = np.asarray(uav_points, dtype=np.float64).reshape(-1, 3)
    if len(obstacle_map) == 0:
        return np.ones(len(uav_points), dtype=bool)
    user_arr = np.array(user.as_tuple(), dtype=np.float64)
    blocked = segment_face_hits(uav_points, user_arr[None, :], obstacle_map.boxes).any(axis=-1)
    return ~blocked


def check_los(uav: Point3, user: Point3, obstacle_map: ObstacleMap) -> int:
    """
    Line-of-sight flag between a UAV and a user.

    Returns:
        1 when no cuboid side face is crossed, 0 when blocked.
    """
    if len(obstacle_map) == 0:
        return 1
    hits = segment_face_hits(np.array(uav.as_tuple()), np.array(user.as_tuple()), obstacle_map.boxes)
    return 0 if hits.any() else 1


def contains_point(c: Cuboid, p: Point3) -> bool:
    """True iff p lies strictly inside the open box."""
    return (c.x_min < p.x < c.x_max and c.y_min < p.y < c.y_max and 0 < p.z < c.height)


def under_roof(c: Cuboid, p: Point3) -> bool:
    """True iff p is over the open footprint and below the roof (ground level included)."""
    return (c.x_min < p.x < c.x_max and c.y_min < p.y < c.y_max and p.z < c.height)


def find_enclosing(obstacle_map: ObstacleMap, p: Point3) -> Optional[Cuboid]:
    """First cuboid whose footprint column below the roof holds p, if any."""
    for c in obstacle_map.cuboids:
        if under_roof(c, p):
            return c
    return None


def _merge_pass(cuboids: List[Cuboid], height_tol: float, axis: str) -> Tuple[List[Cuboid], bool]:
    """
    Merge runs of cuboids sharing a full edge along one axis.

    axis='x' merges boxes with identical y-extent that touch in x;
    axis='y' merges boxes with identical x-extent that touch in y.
    """
    if axis == 'x':
        key = lambda c: (c.y_min, c.y_max)
        start, end = (lambda c: c.x_min), (lambda c: c.x_max)
    else:
        key = lambda c: (c.x_min, c.x_max)
        start, end = (lambda c: c.y_min), (lambda c: c.y_max)

    groups = {}
    for c in cuboids:
        groups.setdefault(key(c), []).append(c)

    merged = []
    changed = False
    for group_key in sorted(groups):
        run = sorted(groups[group_key], key=lambda c: (start(c), end(c), c.height, c.id))
        current = run[0]
        for nxt in run[1:]:
            if start(nxt) == end(current) and abs(nxt.height - current.height) <= height_tol:
                if axis == 'x':
                    current = Cuboid(current.x_min, nxt.x_max, current.y_min, current.y_max,
                                     max(current.height, nxt.height), current.id)
                else:
                    current = Cuboid(current.x_min, current.x_max, current.y_min, nxt.y_max,
                                     max(current.height, nxt.height), current.id)
                changed = True
            else:
                merged.append(current)
                current = nxt
        merged.append(current)
    return merged, changed


def merge_cuboids(obstacle_map: ObstacleMap, height_tol: float = 0.0) -> ObstacleMap:
    """
    Replace face-adjacent cuboids of compatible height by their exact union.

    Alternating x and y sweeps are repeated until no pair merges. A merged
    box takes the tallest constituent's height, so the blocked region can
    only grow.

    Args:
        obstacle_map: input map
        height_tol: maximum height difference for two boxes to merge (m)

    Returns:
        New ObstacleMap with the same bounds.
    """
    if height_tol < 0:
        raise ValueError("height_tol must be >= 0")
    cuboids = list(obstacle_map.cuboids)
    if len(cuboids) < 2:
        return ObstacleMap(tuple(cuboids), obstacle_map.bounds)

    changed = True
    while changed:
        cuboids, changed_x = _merge_pass(cuboids, height_tol, 'x')
        cuboids, changed_y = _merge_pass(cuboids, height_tol, 'y')
        changed = changed_x or changed_y

    cuboids.sort(key=lambda c: (c.x_min, c.y_min, c.x_max, c.y_max, c.height, c.id))
    logger.info("Merged %d cuboids into %d", len(obstacle_map), len(cuboids))
    return ObstacleMap(tuple(cuboids), obstacle_map.bounds)


def suggest_altitude(obstacle_map: ObstacleMap, clearance: float = 10.0) -> float:
    """Flight altitude a fixed clearance above the tallest roof."""
    return obstacle_map.tallest + clearance


def roof_center(c: Cuboid) -> Point3:
    """Centre of a cuboid's roof, e.g. for a charging station on a building."""
    return Point3((c.x_min + c.x_max) / 2.0, (c.y_min + c.y_max) / 2.0, c.height)
