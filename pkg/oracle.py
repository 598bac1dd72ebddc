"""
Brute-force references for the test suite. Slow on purpose; nothing here
reuses the distance, LoS or objective code of the modules it checks.
"""

import math
import itertools
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from config import Config
from utils.errors import EnumerationCapError


@dataclass(frozen=True)
class OracleConfig:
    step: float = Config.ORACLE_STEP
    enumeration_cap: int = Config.ORACLE_ENUMERATION_CAP

    def __post_init__(self):
        if not (self.step > 0):
            raise ValueError("oracle step must be > 0")
        if self.enumeration_cap < 1:
            raise ValueError("enumeration cap must be >= 1")


@dataclass(frozen=True)
class _Pt:
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class OracleTour:
    order: Tuple[int, ...]
    arrival_times: Tuple[float, ...]
    end_time: float
    objective: float


def _xyz(p) -> Tuple[float, float, float]:
    return (float(p.x), float(p.y), float(p.z))


def los_by_sampling(a, b, obstacle_map, step: float = Config.ORACLE_STEP) -> int:
    """
    LoS by dense sampling: blocked iff a sample lies in a closed box
    (footprint and 0 <= z <= height). Only as accurate as `step`.
    """
    if not (step > 0):
        raise ValueError("step must be > 0")
    pa, pb = _xyz(a), _xyz(b)
    length = math.dist(pa, pb)
    count = max(1, math.ceil(length / step))
    s = np.linspace(0.0, 1.0, count + 1)
    xs = pa[0] + s * (pb[0] - pa[0])
    ys = pa[1] + s * (pb[1] - pa[1])
    zs = pa[2] + s * (pb[2] - pa[2])
    for c in obstacle_map.cuboids:
        inside = ((xs >= c.x_min) & (xs <= c.x_max) & (ys >= c.y_min) & (ys <= c.y_max)
                  & (zs >= 0) & (zs <= c.height))
        if inside.any():
            return 0
    return 1


def _chain(order: Sequence[int], points, station, v: float, weights: Sequence[float]):
    times = {}
    clock = 0.0
    here = _xyz(station)
    for k in order:
        there = _xyz(points[k])
        clock += math.dist(here, there) / v
        times[k] = clock
        here = there
    end = clock + math.dist(here, _xyz(station)) / v
    objective = sum(weights[k] * times[k] for k in order)
    return times, end, objective


def brute_force_order(points, users, spec, cap: int = Config.ORACLE_ENUMERATION_CAP) -> OracleTour:
    """
    Enumerate every visiting order; ties go to the lexicographically smallest.

    Raises:
        EnumerationCapError: more users than `cap`
    """
    n = len(points)
    if n > cap:
        raise EnumerationCapError(f"{n} users exceeds the enumeration cap of {cap}")
    weights = [u.weight ** spec.i_w for u in users]
    best = None
    for order in itertools.permutations(range(n)):
        times, end, objective = _chain(order, points, spec.station, spec.v_uav, weights)
        if best is None or objective < best.objective:
            best = OracleTour(tuple(order), tuple(times[k] for k in range(n)), end, objective)
    return best


def brute_force_cells(areas, spec, cap: int = Config.ORACLE_ENUMERATION_CAP,
                      max_combinations: int = 200000) -> OracleTour:
    """
    Exhaustive optimum over every combination of 1-cells and every order,
    restricted to tours within T_max.

    Returns:
        The best feasible OracleTour, or None if no combination fits T_max.
    """
    n = len(areas)
    choices = []
    for i in range(n):
        spec_i = areas.grids[i].spec
        choices.append([_Pt(spec_i.x_min + int(mx) * spec_i.dx, spec_i.y_min + int(my) * spec_i.dy, spec_i.altitude)
                        for mx, my in areas.valid_cells(i)])
    combinations = math.prod(len(c) for c in choices)
    if combinations > max_combinations:
        raise EnumerationCapError(f"{combinations} cell combinations is too many to enumerate")
    best = None
    for pts in itertools.product(*choices):
        tour = brute_force_order(list(pts), areas.users, spec, cap)
        if tour.end_time <= spec.t_max and (best is None or tour.objective < best.objective):
            best = tour
    return best
