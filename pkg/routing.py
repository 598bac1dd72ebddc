"""
Weighted-latency tour construction over chosen service points.

A tour leaves the charging station, visits one service point per user and
returns. The objective is sum_i w_i^I_w * t_i where t_i is the arrival time
at user i's service point; the flight-time limit applies to the closed tour.
"""

import math
import time
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from coverage_grid import ServiceAreas
from geometry import Point3
from link import User, service_mask
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

# relative tolerance under which two subset-DP costs count as tied
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class MissionSpec:
    station: Point3
    users: Tuple[User, ...]
    i_w: float = 2.0
    t_max: float = 2100.0
    v_uav: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, 'users', tuple(self.users))
        if self.i_w < 0:
            raise ValueError(f"I_w must be >= 0, got {self.i_w}")
        if not (self.t_max > 0):
            raise ValueError(f"T_max must be > 0, got {self.t_max}")
        if not (self.v_uav > 0):
            raise ValueError(f"v_uav must be > 0, got {self.v_uav}")

    @classmethod
    def from_energy(cls, station: Point3, users: Sequence[User], e_max: float, p_uav: float,
                    i_w: float = 2.0, v_uav: float = 5.0) -> 'MissionSpec':
        """Build a mission whose flight-time limit is E_max / P_UAV."""
        if not (e_max > 0 and p_uav > 0):
            raise ValueError("E_max and P_UAV must be > 0")
        return cls(station, tuple(users), i_w, e_max / p_uav, v_uav)

    def priority_weights(self) -> np.ndarray:
        """w_i ** I_w per user."""
        return np.array([u.weight ** self.i_w for u in self.users], dtype=np.float64)


@dataclass(frozen=True)
class Tour:
    order: Tuple[int, ...]
    service_points: Tuple[Point3, ...]   # indexed by user
    arrival_times: Tuple[float, ...]     # indexed by user
    end_time: float
    objective: float
    feasible: bool
    exact: bool = True
    reintegrated: FrozenSet[int] = frozenset()

    @property
    def return_time(self) -> float:
        if not self.order:
            return 0.0
        return self.end_time - self.arrival_times[self.order[-1]]


@dataclass
class TracePoint:
    """Incumbent improvement recorded by a stochastic solver."""
    index: int
    elapsed: float
    objective: float
    end_time: float


def travel_time(a: Point3, b: Point3, v: float) -> float:
    """Straight-line flight time between two points at constant speed v."""
    if not (v > 0):
        raise ValueError(f"speed must be > 0, got {v}")
    dx, dy, dz = b.x - a.x, b.y - a.y, b.z - a.z
    return math.sqrt(dx * dx + dy * dy + dz * dz) / v


def objective_value(tour: Tour, users: Sequence[User], i_w: float) -> float:
    """Sum of w_i^I_w * t_i over all users of the tour."""
    return sum(users[i].weight ** i_w * tour.arrival_times[i] for i in tour.order)


def priority_compliance(tour: Tour, users: Sequence[User]) -> Tuple[int, int]:
    """
    Pairs with w_i > w_j that are served in priority order.

    Returns:
        (compliant pairs, total pairs with distinct weights)
    """
    compliant = total = 0
    for i in tour.order:
        for j in tour.order:
            if users[i].weight > users[j].weight:
                total += 1
                if tour.arrival_times[i] < tour.arrival_times[j]:
                    compliant += 1
    return compliant, total


def evaluate_tour(order: Sequence[int], points: Sequence[Point3], spec: MissionSpec,
                  exact: bool = True, reintegrated: FrozenSet[int] = frozenset()) -> Tour:
    """
    Chain arrival times along `order` from the station and close the tour.

    Args:
        order: visiting sequence of user indices
        points: one service point per user (indexed by user)
        spec: mission parameters

    Returns:
        Tour whose feasibility reflects only the flight-time limit.
    """
    order = tuple(int(i) for i in order)
    times = [0.0] * len(points)
    t = 0.0
    prev = spec.station
    for i in order:
        t += travel_time(prev, points[i], spec.v_uav)
        times[i] = t
        prev = points[i]
    end_time = t + travel_time(prev, spec.station, spec.v_uav)
    tour = Tour(order, tuple(points), tuple(times), end_time, 0.0,
                end_time <= spec.t_max, exact, frozenset(reintegrated))
    return replace(tour, objective=objective_value(tour, spec.users, spec.i_w))


def _norms(delta: np.ndarray) -> np.ndarray:
    # same operation order as travel_time, so leg times match it bit for bit
    return np.sqrt(delta[..., 0] * delta[..., 0] + delta[..., 1] * delta[..., 1] + delta[..., 2] * delta[..., 2])


def _time_matrix(points: Sequence[Point3], spec: MissionSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leg times between service points, from the station and back to it."""
    coords = np.array([p.as_tuple() for p in points], dtype=np.float64).reshape(-1, 3)
    legs = _norms(coords[None, :, :] - coords[:, None, :]) / spec.v_uav
    out = _norms(coords - np.array(spec.station.as_tuple())[None, :]) / spec.v_uav
    return legs, out, out.copy()


@lru_cache(maxsize=8)
def _dp_plan(n: int):
    """
    Subset masks for the DP, which depend only on n: a (2^n, n) membership
    table and, layer by layer, the masks ending at each user with their
    predecessor masks.
    """
    masks = np.arange(1 << n)
    bits = (masks[:, None] & (1 << np.arange(n))[None, :]) != 0
    popcount = bits.sum(axis=1)
    steps = []
    for layer in range(2, n + 1):
        layer_masks = masks[popcount == layer]
        for k in range(n):
            sel = layer_masks[(layer_masks & (1 << k)) != 0]
            if len(sel):
                steps.append((k, sel, sel ^ (1 << k)))
    return bits, tuple(steps)


def _subset_dp(legs: np.ndarray, out: np.ndarray, back: np.ndarray, weights: np.ndarray,
               prefer_short: bool) -> List[int]:
    """
    Exact weighted-latency order by dynamic programming over visited subsets.

    f[S, k] is the least cost of visiting S ending at k, where each leg is
    charged its duration times the weight still waiting; this telescopes to
    sum_i w_i t_i. With prefer_short, near-equal costs are broken toward the
    shorter elapsed time (and the shorter closed tour at the end).
    """
    n = len(weights)
    size = 1 << n
    bits, steps = _dp_plan(n)
    total = weights.sum()
    # weight still waiting after the subset has been served
    remaining = total - bits @ weights

    cost = np.full((size, n), np.inf)
    elapsed = np.full((size, n), np.inf)
    parent = np.full((size, n), -1, dtype=np.int64)
    for k in range(n):
        cost[1 << k, k] = out[k] * total
        elapsed[1 << k, k] = out[k]

    for k, sel, prev in steps:
        cand = cost[prev] + legs[:, k][None, :] * remaining[prev][:, None]
        best = cand.argmin(axis=1)
        if prefer_short:
            low = cand.min(axis=1)
            tol = TIE_TOLERANCE * np.maximum(1.0, np.abs(low))
            near = cand <= (low + tol)[:, None]
            lengths = np.where(near, elapsed[prev] + legs[:, k][None, :], np.inf)
            best = lengths.argmin(axis=1)
        rows = np.arange(len(sel))
        cost[sel, k] = cand[rows, best]
        elapsed[sel, k] = elapsed[prev, best] + legs[best, k]
        parent[sel, k] = best

    full = size - 1
    last = int(cost[full].argmin())
    if prefer_short:
        low = cost[full].min()
        near = cost[full] <= low + TIE_TOLERANCE * max(1.0, abs(low))
        last = int(np.where(near, elapsed[full] + back, np.inf).argmin())

    order = []
    mask, k = full, last
    while k >= 0:
        order.append(k)
        prev_k = int(parent[mask, k])
        mask ^= 1 << k
        k = prev_k
    order.reverse()
    return order


def _weighted_latency(order: Sequence[int], legs: np.ndarray, out: np.ndarray, weights: np.ndarray) -> float:
    t = 0.0
    total = 0.0
    prev = -1
    for k in order:
        t += out[k] if prev < 0 else legs[prev, k]
        total += weights[k] * t
        prev = k
    return total


def _local_search(legs: np.ndarray, out: np.ndarray, weights: np.ndarray,
                  restarts: int, seed: int) -> List[int]:
    """Or-opt segment relocation plus 2-opt reversal to a local optimum, with restarts."""
    n = len(weights)
    best_order, best_cost = None, math.inf
    for r in range(restarts):
        if r == 0:
            # greedy start: next stop with the best weight per unit of travel time
            order, remaining_set, prev = [], set(range(n)), -1
            while remaining_set:
                def score(k):
                    leg = out[k] if prev < 0 else legs[prev, k]
                    return (leg / max(weights[k], 1e-300), k)
                k = min(remaining_set, key=score)
                order.append(k)
                remaining_set.remove(k)
                prev = k
        else:
            order = list(derive_rng(seed, 'local_search', r).permutation(n))
        cost = _weighted_latency(order, legs, out, weights)
        improved = True
        while improved:
            improved = False
            # or-opt: move segments of length 1..3
            for seg_len in (1, 2, 3):
                for i in range(n - seg_len + 1):
                    segment = order[i:i + seg_len]
                    rest = order[:i] + order[i + seg_len:]
                    for j in range(len(rest) + 1):
                        if j == i:
                            continue
                        candidate = rest[:j] + segment + rest[j:]
                        c = _weighted_latency(candidate, legs, out, weights)
                        if c < cost - 1e-12:
                            order, cost, improved = candidate, c, True
                            break
                    if improved:
                        break
                if improved:
                    break
            if improved:
                continue
            # 2-opt: reverse a sub-sequence
            for i in range(n - 1):
                for j in range(i + 2, n + 1):
                    candidate = order[:i] + order[i:j][::-1] + order[j:]
                    c = _weighted_latency(candidate, legs, out, weights)
                    if c < cost - 1e-12:
                        order, cost, improved = candidate, c, True
                        break
                if improved:
                    break
        if cost < best_cost:
            best_order, best_cost = list(order), cost
    return [int(k) for k in best_order]


def optimal_order(points: Sequence[Point3], users: Sequence[User], spec: MissionSpec,
                  seed: int = 0) -> Tour:
    """
    Minimum weighted-latency visiting order for one fixed service point per user.

    Exact by subset dynamic programming for up to Config.EXACT_ORDER_LIMIT
    users; beyond that a local-search order is returned with exact=False.
    If the best order overruns T_max, the order is recomputed with ties
    broken toward the shorter closed tour before feasibility is reported.

    Args:
        points: one service point per user (indexed like `users`)
        users: the users being routed
        spec: mission parameters; its station, I_w, T_max and speed are used
        seed: seed for local-search restarts (large instances only)
    """
    if len(points) != len(users):
        raise ValueError("one service point per user required")
    n = len(points)
    local_spec = spec if tuple(users) == spec.users else replace(spec, users=tuple(users))
    if n == 0:
        return Tour((), (), (), 0.0, 0.0, True)

    legs, out, back = _time_matrix(points, local_spec)
    weights = local_spec.priority_weights()
    if n <= Config.EXACT_ORDER_LIMIT:
        order = _subset_dp(legs, out, back, weights, prefer_short=False)
        tour = evaluate_tour(order, points, local_spec)
        if not tour.feasible:
            order = _subset_dp(legs, out, back, weights, prefer_short=True)
            tour = evaluate_tour(order, points, local_spec)
        return tour

    order = _local_search(legs, out, weights, Config.LOCAL_SEARCH_RESTARTS, seed)
    logger.debug("Local search used for %d users", n)
    return evaluate_tour(order, points, local_spec, exact=False)


def _draw_points(areas: ServiceAreas, seed: int, iteration: int) -> List[Point3]:
    """
    One uniformly drawn 1-cell lattice point per user. Both heuristics draw
    iteration k from the same stream, so equal seeds give paired runs.
    """
    rng = derive_rng(seed, 'service_points', iteration)
    points = []
    for i in range(len(areas)):
        pts = areas.valid_points(i)
        k = int(rng.integers(len(pts)))
        points.append(Point3(*(float(v) for v in pts[k])))
    return points


def _better(candidate: Tour, incumbent: Optional[Tour]) -> bool:
    """Feasible beats infeasible; then lower objective; then lower end time."""
    if incumbent is None:
        return True
    if candidate.feasible != incumbent.feasible:
        return candidate.feasible
    if candidate.feasible:
        return candidate.objective < incumbent.objective
    return candidate.end_time < incumbent.end_time


def heuristic_solve(areas: ServiceAreas, spec: MissionSpec, iterations: int, seed: int,
                    time_budget: Optional[float] = None,
                    trace: Optional[List[TracePoint]] = None) -> Tour:
    """
    Random service-point selection followed by exact ordering, repeated.

    Each iteration draws one uniform 1-cell per user from a generator
    derived from (seed, iteration) and orders the points optimally; the
    best feasible tour by objective wins (earliest iteration on ties).

    Returns:
        The best tour; `feasible` is False when no iteration met T_max, in
        which case the tour with the shortest closed flight is returned.

    Raises:
        UnsatisfiableUserError: a user has an all-zero service area
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    areas.require_satisfiable()
    started = time.perf_counter()
    best = None
    for it in range(iterations):
        points = _draw_points(areas, seed, it)
        tour = optimal_order(points, areas.users, spec, seed=seed)
        if _better(tour, best):
            best = tour
            if trace is not None:
                trace.append(TracePoint(it, time.perf_counter() - started, tour.objective, tour.end_time))
            logger.debug("heuristic iteration %d: objective %.3f end %.1f feasible=%s",
                         it, tour.objective, tour.end_time, tour.feasible)
        if time_budget is not None and time.perf_counter() - started >= time_budget:
            logger.info("heuristic stopped by time budget after %d iterations", it + 1)
            break
    if not best.feasible:
        logger.warning("heuristic: no feasible tour in %d iterations", iterations)
    return best


def _polyline_samples(vertices: Sequence[Point3], step: float, v: float):
    """
    Sample each leg of a polyline at spacing <= step.

    Returns:
        (points (K,3), leg index per sample, elapsed time per sample)
    """
    pts, legs, times = [], [], []
    t0 = 0.0
    for leg in range(len(vertices) - 1):
        a, b = vertices[leg], vertices[leg + 1]
        seg = np.array(b.as_tuple()) - np.array(a.as_tuple())
        length = float(np.sqrt(seg @ seg))
        count = max(1, int(math.ceil(length / step)))
        fractions = np.arange(count + 1) / count
        pts.append(np.array(a.as_tuple())[None, :] + fractions[:, None] * seg[None, :])
        legs.append(np.full(count + 1, leg))
        times.append(t0 + fractions * length / v)
        t0 += length / v
    return np.vstack(pts), np.concatenate(legs), np.concatenate(times)


def _nearest_on_polyline(points: np.ndarray, vertices: Sequence[Point3]) -> np.ndarray:
    """Distance from each point to the closest point of the polyline."""
    best = np.full(len(points), np.inf)
    for a, b in zip(vertices[:-1], vertices[1:]):
        a_arr = np.array(a.as_tuple())
        seg = np.array(b.as_tuple()) - a_arr
        denom = float(seg @ seg)
        rel = points - a_arr[None, :]
        s = np.zeros(len(points)) if denom == 0 else np.clip(rel @ seg / denom, 0.0, 1.0)
        closest = a_arr[None, :] + s[:, None] * seg[None, :]
        d = np.sqrt(((points - closest) ** 2).sum(axis=1))
        best = np.minimum(best, d)
    return best


def reintegrate_excluded(tour: Tour, excluded: Sequence[int], areas: ServiceAreas, spec: MissionSpec,
                         corridor: Optional[float] = None) -> Optional[Tour]:
    """
    Insert excluded users into an optimised tour at minimal added flight time.

    Users are handled by descending weight (ties by id). For each, the
    polyline of the current tour is sampled at the grid resolution; a valid
    on-path service point costs nothing and the earliest one is used.
    Otherwise the user's 1-cells within `corridor` of the path are tried as
    detours between consecutive tour vertices, cheapest first.

    Args:
        tour: tour over the retained users (service_points cover all users;
              only entries of visited users are read)
        excluded: user indices to reinsert
        areas: service areas of all users of `spec`
        spec: mission over all users
        corridor: max distance of an off-path candidate from the path
                  (defaults to the grid resolution)

    Returns:
        A tour over retained and reinserted users, or None if some excluded
        user cannot be served within T_max.
    """
    step = areas.resolution
    corridor = step if corridor is None else corridor
    order = list(tour.order)
    points = list(tour.service_points)
    users = areas.users
    reinserted = set(tour.reintegrated)

    for i in sorted(excluded, key=lambda k: (-users[k].weight, users[k].id)):
        vertices = [spec.station] + [points[k] for k in order] + [spec.station]
        samples, sample_leg, _ = _polyline_samples(vertices, step, spec.v_uav)
        valid = np.flatnonzero(areas_service_mask(areas, i, samples))
        if len(valid):
            # samples are time-ordered, so the first valid one is the earliest
            s = valid[0]
            points[i] = Point3(*(float(v) for v in samples[s]))
            order.insert(int(sample_leg[s]), i)
            reinserted.add(i)
            continue

        cands = areas.valid_points(i)
        if len(cands) == 0:
            return None
        near = cands[_nearest_on_polyline(cands, vertices) <= corridor]
        if len(near) == 0:
            return None
        best = None
        for leg in range(len(vertices) - 1):
            a = np.array(vertices[leg].as_tuple())
            b = np.array(vertices[leg + 1].as_tuple())
            direct = float(np.sqrt(((b - a) ** 2).sum()))
            detour = (np.sqrt(((near - a) ** 2).sum(axis=1)) + np.sqrt(((near - b) ** 2).sum(axis=1))
                      - direct) / spec.v_uav
            k = int(detour.argmin())
            if best is None or detour[k] < best[0]:
                best = (float(detour[k]), leg, near[k])
        points[i] = Point3(*(float(v) for v in best[2]))
        order.insert(best[1], i)
        reinserted.add(i)

    result = evaluate_tour(order, points, spec, exact=tour.exact, reintegrated=frozenset(reinserted))
    if not result.feasible:
        return None
    return result


def areas_service_mask(areas: ServiceAreas, i: int, uav_points: np.ndarray) -> np.ndarray:
    """QoS validity of arbitrary UAV positions for user i."""
    return service_mask(uav_points, areas.users[i], areas.obstacles, areas.budget)


def low_priority_pool(users: Sequence[User]) -> List[int]:
    """The floor(N/2) lowest-weight users (ties by id), eligible for exclusion."""
    ranked = sorted(range(len(users)), key=lambda k: (users[k].weight, users[k].id))
    return ranked[:len(users) // 2]


def advanced_solve(areas: ServiceAreas, spec: MissionSpec, iterations: int, seed: int,
                   time_budget: Optional[float] = None,
                   trace: Optional[List[TracePoint]] = None) -> Tour:
    """
    Heuristic search that routes high-priority users first and reinserts
    excluded low-priority users along the optimised path.

    Per iteration: draw service points, draw N' uniformly from
    {0..floor(N/2)}, exclude N' users from the low-priority pool, order the
    rest exactly, then reintegrate. An iteration counts only if every
    excluded user is reinserted within T_max. If no iteration yields a
    feasible tour, the best full-routing (N' = 0) attempt is returned.

    Raises:
        UnsatisfiableUserError: a user has an all-zero service area
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    areas.require_satisfiable()
    users = areas.users
    n = len(users)
    pool = low_priority_pool(users)
    started = time.perf_counter()
    best = None
    fallback = None
    for it in range(iterations):
        points = _draw_points(areas, seed, it)
        rng = derive_rng(seed, 'advanced', it)
        n_excluded = int(rng.integers(0, n // 2 + 1))
        excluded = sorted(int(k) for k in rng.choice(pool, size=n_excluded, replace=False)) if n_excluded else []
        dropped = set(excluded)
        retained = [k for k in range(n) if k not in dropped]

        sub = optimal_order([points[k] for k in retained], [users[k] for k in retained], spec, seed=seed)
        # lift the sub-tour back to global user indices
        order = [retained[k] for k in sub.order]
        lifted = evaluate_tour(order, points, spec, exact=sub.exact)
        if not excluded:
            candidate = lifted
            if fallback is None or _better(candidate, fallback):
                fallback = candidate
        elif not lifted.feasible:
            continue
        else:
            candidate = reintegrate_excluded(lifted, excluded, areas, spec)
            if candidate is None:
                continue
        if candidate.feasible and _better(candidate, best):
            best = candidate
            if trace is not None:
                trace.append(TracePoint(it, time.perf_counter() - started, candidate.objective, candidate.end_time))
            logger.debug("advanced iteration %d: excluded %d, objective %.3f",
                         it, len(excluded), candidate.objective)
        if time_budget is not None and time.perf_counter() - started >= time_budget:
            logger.info("advanced stopped by time budget after %d iterations", it + 1)
            break

    if best is not None:
        return best
    if fallback is None:
        fallback = optimal_order(_draw_points(areas, seed, iterations), users, spec, seed=seed)
    logger.warning("advanced: no feasible tour in %d iterations", iterations)
    return fallback


def mission_energy(tour: Tour, p_uav: float) -> float:
    """Energy drawn over the closed tour at constant propulsion power P_UAV."""
    if not (p_uav > 0):
        raise ValueError(f"P_UAV must be > 0, got {p_uav}")
    return p_uav * tour.end_time
