"""
Link quality model: Gaussian-tail BER, priority-dependent BER thresholds,
the resulting maximum service distance, and service-point validation.
"""

import math
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfc

from geometry import ObstacleMap, Point3, los_mask

logger = logging.getLogger(__name__)

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class LinkBudget:
    ber_loose: float = 1e-3   # threshold for weight 0
    ber_strict: float = 1e-6  # threshold for weight 1
    d_ref: float = 500.0      # distance (m) at which BER equals ber_loose
    v_uav: float = 5.0

    def __post_init__(self):
        if not (0 < self.ber_strict < self.ber_loose < 0.5):
            raise ValueError(
                f"need 0 < ber_strict < ber_loose < 0.5, got strict={self.ber_strict}, loose={self.ber_loose}")
        if not (self.d_ref > 0):
            raise ValueError(f"d_ref must be > 0, got {self.d_ref}")
        if not (self.v_uav > 0):
            raise ValueError(f"v_uav must be > 0, got {self.v_uav}")


@dataclass(frozen=True)
class User:
    id: str
    position: Point3
    weight: float

    def __post_init__(self):
        if not (0 < self.weight <= 1):
            raise ValueError(f"user {self.id!r}: weight must be in (0, 1], got {self.weight}")


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    return float(0.5 * erfc(x / _SQRT2))


@lru_cache(maxsize=4096)
def q_inverse(p: float) -> float:
    """
    Inverse of q_function on (0, 0.5), solved by bracketed root finding.

    Raises:
        ValueError: p outside (0, 0.5)
    """
    if not (0 < p < 0.5):
        raise ValueError(f"q_inverse is defined on (0, 0.5), got {p}")
    upper = 1.0
    while q_function(upper) > p:
        upper *= 2.0
    return brentq(lambda x: q_function(x) - p, 0.0, upper, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500)


def _check_weight(w: float):
    if not (0 <= w <= 1):
        raise ValueError(f"weight must be in [0, 1], got {w}")


def ber_threshold(w: float, budget: LinkBudget) -> float:
    """Log-linear interpolation between the loose (w=0) and strict (w=1) thresholds."""
    _check_weight(w)
    if w == 0:
        return budget.ber_loose
    if w == 1:
        return budget.ber_strict
    return math.exp((1 - w) * math.log(budget.ber_loose) + w * math.log(budget.ber_strict))


def link_constant(budget: LinkBudget) -> float:
    """
    The aggregate 2*c1*P_t/N_0, calibrated so the BER at d_ref equals ber_loose.
    """
    return (q_inverse(budget.ber_loose) * budget.d_ref) ** 2


def ber_at_distance(d: float, budget: LinkBudget) -> float:
    """BER of a LoS link of length d under the calibrated distance law."""
    if d <= 0:
        return 0.0
    return q_function(math.sqrt(link_constant(budget)) / d)


def max_service_distance(w: float, budget: LinkBudget) -> float:
    """Largest UAV-user distance meeting the BER threshold of a user with weight w."""
    threshold = ber_threshold(w, budget)
    if threshold == budget.ber_loose:
        return budget.d_ref
    return budget.d_ref * q_inverse(budget.ber_loose) / q_inverse(threshold)


def distances(points: np.ndarray, target: Point3) -> np.ndarray:
    """Euclidean distances from each row of points to target."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    dx = points[:, 0] - target.x
    dy = points[:, 1] - target.y
    dz = points[:, 2] - target.z
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def service_mask(uav_points: np.ndarray, user: User, obstacle_map: ObstacleMap,
                 budget: LinkBudget) -> np.ndarray:
    """
    Vectorised validate_service_point over many UAV positions.

    LoS is only evaluated for positions that already pass the distance bound.
    """
    uav_points = np.asarray(uav_points, dtype=np.float64).reshape(-1, 3)
    d_max = max_service_distance(user.weight, budget)
    mask = distances(uav_points, user.position) <= d_max
    if mask.any():
        idx = np.flatnonzero(mask)
        mask[idx] = los_mask(uav_points[idx], user.position, obstacle_map)
    return mask


def validate_service_point(uav: Point3, user: User, obstacle_map: ObstacleMap, budget: LinkBudget) -> bool:
    """
    True when the UAV at `uav` serves `user` with the required BER: within the
    priority-dependent distance and in clear line of sight.
    """
    return bool(service_mask(np.array([uav.as_tuple()]), user, obstacle_map, budget)[0])
