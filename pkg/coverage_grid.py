"""
Grid discretisation of the UAV flight plane and per-user service areas.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import numpy as np

from geometry import ObstacleMap, Point3
from link import LinkBudget, User, service_mask
from utils.errors import UnsatisfiableUserError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    dx: float = 10.0
    dy: float = 10.0
    altitude: float = 260.0

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise ValueError("grid: x_min < x_max required")
        if not (self.y_min < self.y_max):
            raise ValueError("grid: y_min < y_max required")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("grid: dx and dy must be > 0")
        if not (self.altitude > 0):
            raise ValueError("grid: altitude must be > 0")


def grid_dimensions(spec: GridSpec) -> Tuple[int, int]:
    """Number of lattice points (M_x, M_y)."""
    m_x = math.floor((spec.x_max - spec.x_min) / spec.dx) + 1
    m_y = math.floor((spec.y_max - spec.y_min) / spec.dy) + 1
    return m_x, m_y


def cell_center(spec: GridSpec, m_x: int, m_y: int) -> Point3:
    """Lattice point (x_min + m_x*dx, y_min + m_y*dy) at the grid altitude."""
    n_x, n_y = grid_dimensions(spec)
    if not (0 <= m_x < n_x and 0 <= m_y < n_y):
        raise IndexError(f"cell ({m_x}, {m_y}) outside grid of {n_x} x {n_y}")
    return Point3(spec.x_min + m_x * spec.dx, spec.y_min + m_y * spec.dy, spec.altitude)


def lattice_points(spec: GridSpec) -> np.ndarray:
    """All lattice points, shape (M_x, M_y, 3), m_x outer."""
    n_x, n_y = grid_dimensions(spec)
    xs = spec.x_min + np.arange(n_x, dtype=np.float64) * spec.dx
    ys = spec.y_min + np.arange(n_y, dtype=np.float64) * spec.dy
    pts = np.empty((n_x, n_y, 3), dtype=np.float64)
    pts[:, :, 0] = xs[:, None]
    pts[:, :, 1] = ys[None, :]
    pts[:, :, 2] = spec.altitude
    return pts


@dataclass(frozen=True)
class ServiceAreaGrid:
    spec: GridSpec
    user_id: str
    cells: np.ndarray = field(compare=False)  # uint8, shape (M_x, M_y)

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.shape != grid_dimensions(self.spec):
            raise ValueError(f"cells shape {cells.shape} does not match grid {grid_dimensions(self.spec)}")
        cells.setflags(write=False)
        object.__setattr__(self, 'cells', cells)

    def valid_cells(self) -> np.ndarray:
        """(K, 2) array of (m_x, m_y) 1-cells in row-major order."""
        return np.argwhere(self.cells == 1)

    def is_valid(self, m_x: int, m_y: int) -> bool:
        n_x, n_y = self.cells.shape
        return 0 <= m_x < n_x and 0 <= m_y < n_y and bool(self.cells[m_x, m_y])

    def __eq__(self, other):
        if not isinstance(other, ServiceAreaGrid):
            return NotImplemented
        return (self.spec == other.spec and self.user_id == other.user_id
                and np.array_equal(self.cells, other.cells))

    __hash__ = None


def service_area(user: User, obstacle_map: ObstacleMap, budget: LinkBudget, spec: GridSpec) -> ServiceAreaGrid:
    """
    Evaluate every lattice point of the grid as a service point for one user.
    """
    pts = lattice_points(spec)
    n_x, n_y = pts.shape[:2]
    mask = service_mask(pts.reshape(-1, 3), user, obstacle_map, budget)
    cells = mask.reshape(n_x, n_y).astype(np.uint8)
    logger.debug("Service area for %s: %d of %d cells", user.id, int(cells.sum()), cells.size)
    return ServiceAreaGrid(spec, user.id, cells)


@dataclass(frozen=True)
class ServiceAreas:
    """
    Service areas of every user of a mission, plus the geometry and link
    budget they were computed from (needed to validate off-lattice points).
    """
    users: Tuple[User, ...]
    grids: Tuple[ServiceAreaGrid, ...]
    obstacles: ObstacleMap
    budget: LinkBudget
    _cell_points: Tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)
    _cell_index: Tuple[np.ndarray, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'users', tuple(self.users))
        object.__setattr__(self, 'grids', tuple(self.grids))
        if len(self.users) != len(self.grids):
            raise ValueError("one service area grid per user required")
        points, index = [], []
        for grid in self.grids:
            cells = grid.valid_cells()
            index.append(cells)
            if len(cells):
                points.append(lattice_points(grid.spec)[cells[:, 0], cells[:, 1]])
            else:
                points.append(np.empty((0, 3)))
        object.__setattr__(self, '_cell_points', tuple(points))
        object.__setattr__(self, '_cell_index', tuple(index))

    def __len__(self) -> int:
        return len(self.users)

    @property
    def spec(self) -> GridSpec:
        return self.grids[0].spec

    @property
    def resolution(self) -> float:
        return min(self.spec.dx, self.spec.dy)

    def valid_cells(self, i: int) -> np.ndarray:
        """(K, 2) 1-cell indices of user i."""
        return self._cell_index[i]

    def valid_points(self, i: int) -> np.ndarray:
        """(K, 3) lattice points of user i's 1-cells, aligned with valid_cells(i)."""
        return self._cell_points[i]

    def require_satisfiable(self):
        """Raise UnsatisfiableUserError for the first user with no 1-cell."""
        for user, cells in zip(self.users, self._cell_index):
            if len(cells) == 0:
                raise UnsatisfiableUserError(user.id)

    def point_is_valid(self, i: int, point: Point3) -> bool:
        """A lattice 1-cell of user i, or an off-lattice point passing the QoS check."""
        grid = self.grids[i]
        spec = grid.spec
        fx = (point.x - spec.x_min) / spec.dx
        fy = (point.y - spec.y_min) / spec.dy
        m_x, m_y = int(round(fx)), int(round(fy))
        if point.z == spec.altitude and fx == m_x and fy == m_y and grid.is_valid(m_x, m_y):
            return True
        return bool(service_mask(np.array([point.as_tuple()]), self.users[i], self.obstacles, self.budget)[0])


def compute_service_areas(users: Sequence[User], obstacle_map: ObstacleMap, budget: LinkBudget,
                          spec: GridSpec) -> ServiceAreas:
    """Service areas for every user, in user order."""
    grids = [service_area(u, obstacle_map, budget, spec) for u in users]
    logger.info("Computed %d service areas on a %d x %d grid at %.1f m",
                len(grids), *grid_dimensions(spec), spec.altitude)
    return ServiceAreas(tuple(users), tuple(grids), obstacle_map, budget)


def coverage_stats(grid: ServiceAreaGrid) -> Dict[str, float]:
    """Count and fraction of valid cells."""
    total = int(grid.cells.size)
    valid = int(grid.cells.sum())
    return {'user_id': grid.user_id, 'valid_cells': valid, 'total_cells': total,
            'fraction': (valid / total) if total else 0.0}


def union_coverage(grids: Sequence[ServiceAreaGrid]) -> np.ndarray:
    """Cells that serve at least one user."""
    if not grids:
        raise ValueError("union_coverage needs at least one grid")
    out = np.zeros_like(grids[0].cells)
    for g in grids:
        out |= g.cells
    return out
