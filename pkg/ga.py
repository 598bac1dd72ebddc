"""
Genetic algorithm over joint (visiting order, service cell) chromosomes.

Fitness is minimised: the weighted-latency objective plus linear penalties
for overrunning T_max and for cells outside a user's service area. Tours
always close at the station, so no return-to-station term is needed.
"""

import time
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from coverage_grid import ServiceAreas, cell_center
from geometry import Point3
from routing import MissionSpec, Tour, TracePoint, evaluate_tour
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Chromosome:
    order: Tuple[int, ...]
    cell_choice: Tuple[Tuple[int, int], ...]  # (m_x, m_y) per user


@dataclass(frozen=True)
class GaConfig:
    population: int = Config.GA_POPULATION
    generations: int = Config.GA_GENERATIONS
    crossover_rate: float = Config.GA_CROSSOVER_RATE
    mutation_rate: float = Config.GA_MUTATION_RATE
    lam: float = Config.GA_LAMBDA
    mu: float = Config.GA_MU
    gamma: float = 0.0
    seed: int = 0
    tournament_size: int = Config.GA_TOURNAMENT_SIZE
    elite: int = Config.GA_ELITE

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ('crossover_rate', 'mutation_rate'):
            value = getattr(self, name)
            if not (0 <= value <= 1):
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if min(self.lam, self.mu, self.gamma) < 0:
            raise ValueError("penalty factors must be >= 0")
        if not (1 <= self.elite < self.population):
            raise ValueError("elite must be in [1, population)")


def _cell_point(areas: ServiceAreas, user: int, cell: Tuple[int, int]) -> Point3:
    return cell_center(areas.grids[user].spec, int(cell[0]), int(cell[1]))


def decode(ch: Chromosome, areas: ServiceAreas, spec: MissionSpec) -> Tour:
    """Tour flown by a chromosome; feasible only if T_max holds and every cell is a 1-cell."""
    points = [_cell_point(areas, i, cell) for i, cell in enumerate(ch.cell_choice)]
    tour = evaluate_tour(ch.order, points, spec, exact=False)
    if tour.feasible and _invalid_cells(ch, areas):
        tour = replace(tour, feasible=False)
    return tour


def _invalid_cells(ch: Chromosome, areas: ServiceAreas) -> int:
    return sum(0 if areas.grids[i].is_valid(int(mx), int(my)) else 1
               for i, (mx, my) in enumerate(ch.cell_choice))


def _score(ch: Chromosome, areas: ServiceAreas, spec: MissionSpec, cfg: GaConfig) -> Tuple[float, bool]:
    points = [_cell_point(areas, i, cell) for i, cell in enumerate(ch.cell_choice)]
    tour = evaluate_tour(ch.order, points, spec)
    invalid = _invalid_cells(ch, areas)
    score = (tour.objective
             + cfg.lam * max(0.0, tour.end_time - spec.t_max)
             + cfg.mu * invalid)
    return score, tour.feasible and invalid == 0


def fitness(ch: Chromosome, areas: ServiceAreas, spec: MissionSpec, cfg: GaConfig) -> float:
    """
    Penalised objective J (lower is better).

    J = sum w_i^I_w t_i + lam * max(0, t_end - T_max) + mu * (#users off their service area)
    """
    return _score(ch, areas, spec, cfg)[0]


def order_crossover(p1: Sequence[int], p2: Sequence[int], rng: np.random.Generator) -> List[int]:
    """OX: keep a slice of p1, fill the rest in p2's order."""
    n = len(p1)
    if n < 2:
        return list(p1)
    start, end = sorted(int(v) for v in rng.choice(n + 1, size=2, replace=False))
    child = [None] * n
    child[start:end] = p1[start:end]
    kept = set(p1[start:end])
    fill = iter(g for g in p2 if g not in kept)
    for i in range(n):
        if child[i] is None:
            child[i] = next(fill)
    return child


def _random_cell(areas: ServiceAreas, user: int, rng: np.random.Generator) -> Tuple[int, int]:
    cells = areas.valid_cells(user)
    k = int(rng.integers(len(cells)))
    return int(cells[k, 0]), int(cells[k, 1])


def _random_chromosome(areas: ServiceAreas, rng: np.random.Generator) -> Chromosome:
    n = len(areas)
    order = tuple(int(v) for v in rng.permutation(n))
    cells = tuple(_random_cell(areas, i, rng) for i in range(n))
    return Chromosome(order, cells)


def _tournament(scores: np.ndarray, size: int, rng: np.random.Generator) -> int:
    picks = rng.choice(len(scores), size=min(size, len(scores)), replace=False)
    return int(picks[np.argmin(scores[picks])])


def _offspring(a: Chromosome, b: Chromosome, areas: ServiceAreas, cfg: GaConfig,
               rng: np.random.Generator) -> Chromosome:
    n = len(a.order)
    if rng.random() < cfg.crossover_rate:
        order = order_crossover(a.order, b.order, rng)
        take_a = rng.random(n) < 0.5
        cells = [a.cell_choice[i] if take_a[i] else b.cell_choice[i] for i in range(n)]
    else:
        order = list(a.order)
        cells = list(a.cell_choice)
    if rng.random() < cfg.mutation_rate and n >= 2:
        i, j = (int(v) for v in rng.choice(n, size=2, replace=False))
        order[i], order[j] = order[j], order[i]
    if rng.random() < cfg.mutation_rate:
        user = int(rng.integers(n))
        cells[user] = _random_cell(areas, user, rng)
    return Chromosome(tuple(order), tuple(cells))


def ga_solve(areas: ServiceAreas, spec: MissionSpec, cfg: GaConfig,
             time_budget: Optional[float] = None,
             trace: Optional[List[TracePoint]] = None,
             history: Optional[List[float]] = None) -> Tour:
    """
    Evolve visiting orders and service cells for cfg.generations generations.

    Tournament selection, order crossover on the permutation and uniform
    crossover on the cells, swap and cell-resample mutation, and elitist
    replacement. All draws come from generators derived from cfg.seed.

    Returns:
        The best feasible chromosome seen, decoded as a Tour. If none was
        feasible, the lowest-fitness chromosome with feasible=False.

    Raises:
        UnsatisfiableUserError: a user has an all-zero service area
    """
    areas.require_satisfiable()
    started = time.perf_counter()
    rng = derive_rng(cfg.seed, 'ga_init', 0)
    population = [_random_chromosome(areas, rng) for _ in range(cfg.population)]
    scored = [_score(ch, areas, spec, cfg) for ch in population]
    scores = np.array([s for s, _ in scored])
    best_feasible, best_feasible_score = None, np.inf

    for gen in range(cfg.generations):
        for ch, (s, ok) in zip(population, scored):
            if ok and s < best_feasible_score:
                best_feasible, best_feasible_score = ch, s
                if trace is not None:
                    tour = decode(ch, areas, spec)
                    trace.append(TracePoint(gen, time.perf_counter() - started, tour.objective, tour.end_time))
                logger.debug("ga generation %d: best feasible objective %.3f", gen, s)
        ranked = np.argsort(scores, kind='stable')
        if history is not None:
            history.append(float(scores[ranked[0]]))

        rng = derive_rng(cfg.seed, 'ga_generation', gen)
        elite = [population[k] for k in ranked[:cfg.elite]]
        elite_scored = [scored[k] for k in ranked[:cfg.elite]]
        children = []
        while len(children) < cfg.population - cfg.elite:
            a = population[_tournament(scores, cfg.tournament_size, rng)]
            b = population[_tournament(scores, cfg.tournament_size, rng)]
            children.append(_offspring(a, b, areas, cfg, rng))
        population = elite + children
        scored = elite_scored + [_score(ch, areas, spec, cfg) for ch in children]
        scores = np.array([s for s, _ in scored])

        if time_budget is not None and time.perf_counter() - started >= time_budget:
            logger.info("ga stopped by time budget after %d generations", gen + 1)
            break

    for ch, (s, ok) in zip(population, scored):
        if ok and s < best_feasible_score:
            best_feasible, best_feasible_score = ch, s

    if best_feasible is not None:
        return decode(best_feasible, areas, spec)
    logger.warning("ga: no feasible chromosome found (best fitness %.3f)", float(scores.min()))
    return decode(population[int(np.argmin(scores))], areas, spec)
