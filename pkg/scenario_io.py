"""
Scenario and result serialization.

A scenario is one JSON document (schema version 1, see
docs/SCENARIO_FORMAT.md). Results are written as JSON reports, CSV rasters
(one row per m_y) and GeoJSON for plotting. Every file is written with
sorted keys and fixed formatting so identical inputs give identical bytes.
"""

import json
import math
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import Config
from coverage_grid import GridSpec, ServiceAreaGrid, cell_center, grid_dimensions
from ga import GaConfig
from geometry import Cuboid, ObstacleMap, Point3, find_enclosing, merge_cuboids, roof_center, suggest_altitude
from link import LinkBudget, User, ber_at_distance, ber_threshold, distances, validate_service_point
from routing import MissionSpec, Tour, mission_energy, priority_compliance
from utils.errors import ScenarioError
from utils.seeding import derive_rng

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_TOP_LEVEL_KEYS = {'version', 'seed', 'bounds', 'obstacles', 'merge', 'users', 'station',
                   'link', 'grid', 'mission', 'solvers', 'notes'}
_FOOTPRINT_COLUMNS = ('x_min', 'x_max', 'y_min', 'y_max')
# footprint tables are merged exactly: equal heights only
FOOTPRINT_MERGE_TOLERANCE = 0.0


@dataclass(frozen=True)
class Scenario:
    obstacle_map: ObstacleMap
    users: Tuple[User, ...]
    station: Point3
    budget: LinkBudget
    grid: GridSpec
    mission: MissionSpec
    iterations: int = Config.HEURISTIC_ITERATIONS
    ga: GaConfig = field(default_factory=GaConfig)
    seed: Optional[int] = None
    p_uav: Optional[float] = None
    station_building: Optional[str] = None
    altitude_auto: bool = False
    merged: bool = False
    source_obstacles: Optional[ObstacleMap] = None  # as written in the file, before merging


@dataclass(frozen=True)
class UserRecord:
    id: str
    weight: float
    arrival_time: float
    service_point: Tuple[float, float, float]
    ber_threshold: float
    ber: float
    qos_met: bool
    reintegrated: bool = False


@dataclass(frozen=True)
class TrajectoryReport:
    solver: str
    seed: int
    iterations: int
    order: Tuple[str, ...]
    end_time: float
    objective: float
    feasible: bool
    exact: bool
    i_w: float
    t_max: float
    compliant_pairs: int
    total_pairs: int
    records: Tuple[UserRecord, ...]
    energy: Optional[float] = None
    wall_time: Optional[float] = None


# ---------------------------------------------------------------------------
# Field parsing
# ---------------------------------------------------------------------------

_MISSING = object()


def _number(obj: Dict[str, Any], key: str, where: str, default=_MISSING) -> float:
    value = obj.get(key, _MISSING)
    if value is _MISSING or value is None:
        if default is _MISSING:
            raise ScenarioError(f"{where}.{key}" if where else key, "required")
        return default
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}.{key}" if where else key, f"must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(f"{where}.{key}" if where else key, "must be finite")
    return float(value)


def _integer(obj: Dict[str, Any], key: str, where: str, default=_MISSING) -> int:
    value = obj.get(key, _MISSING)
    if value is _MISSING or value is None:
        if default is _MISSING:
            raise ScenarioError(f"{where}.{key}" if where else key, "required")
        return default
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{where}.{key}" if where else key, f"must be an integer, got {value!r}")
    return value


def _section(data: Dict[str, Any], key: str, required: bool = False) -> Dict[str, Any]:
    value = data.get(key)
    if value is None:
        if required:
            raise ScenarioError(key, "required")
        return {}
    if not isinstance(value, dict):
        raise ScenarioError(key, "must be an object")
    return value


def _parse_bounds(data: Dict[str, Any]) -> Tuple[float, float, float, float]:
    section = _section(data, 'bounds', required=True)
    bounds = tuple(_number(section, k, 'bounds') for k in ('x_min', 'x_max', 'y_min', 'y_max'))
    if not (bounds[0] < bounds[1]):
        raise ScenarioError('bounds', 'x_min < x_max required')
    if not (bounds[2] < bounds[3]):
        raise ScenarioError('bounds', 'y_min < y_max required')
    return bounds


def _parse_obstacles(data: Dict[str, Any], bounds) -> ObstacleMap:
    rows = data.get('obstacles', [])
    if not isinstance(rows, list):
        raise ScenarioError('obstacles', 'must be a list')
    cuboids, seen = [], set()
    for k, row in enumerate(rows):
        where = f"obstacles[{k}]"
        if not isinstance(row, dict):
            raise ScenarioError(where, 'must be an object')
        cid = str(row.get('id', f"b{k + 1}"))
        if cid in seen:
            raise ScenarioError(f"{where}.id", f"duplicate id {cid!r}")
        seen.add(cid)
        try:
            cuboids.append(Cuboid(*(_number(row, c, where) for c in ('x_min', 'x_max', 'y_min', 'y_max', 'height')),
                                  id=cid))
        except ValueError as e:
            raise ScenarioError(where, str(e)) from None
    try:
        return ObstacleMap(tuple(cuboids), bounds)
    except ValueError as e:
        raise ScenarioError('obstacles', str(e)) from None


def _in_bounds(p: Point3, bounds) -> bool:
    return bounds[0] <= p.x <= bounds[1] and bounds[2] <= p.y <= bounds[3]


def _parse_point(obj: Dict[str, Any], where: str) -> Point3:
    try:
        return Point3(_number(obj, 'x', where), _number(obj, 'y', where), _number(obj, 'z', where, 0.0))
    except ValueError as e:
        raise ScenarioError(where, str(e)) from None


def _parse_users(data: Dict[str, Any], obstacle_map: ObstacleMap) -> Tuple[User, ...]:
    rows = data.get('users')
    if not isinstance(rows, list) or not rows:
        raise ScenarioError('users', 'must be a non-empty list')
    users, seen = [], set()
    for k, row in enumerate(rows):
        where = f"users[{k}]"
        if not isinstance(row, dict):
            raise ScenarioError(where, 'must be an object')
        uid = str(row.get('id', f"u{k + 1}"))
        if uid in seen:
            raise ScenarioError(f"{where}.id", f"duplicate id {uid!r}")
        seen.add(uid)
        position = _parse_point(row, where)
        if not _in_bounds(position, obstacle_map.bounds):
            raise ScenarioError(where, f"user {uid!r} lies outside the map bounds")
        building = find_enclosing(obstacle_map, position)
        if building is not None:
            raise ScenarioError(where, f"user {uid!r} is inside building {building.id!r}")
        try:
            users.append(User(uid, position, _number(row, 'weight', where)))
        except ValueError as e:
            raise ScenarioError(f"{where}.weight", str(e)) from None
    return tuple(users)


def place_station_on_roof(obstacle_map: ObstacleMap, building_id: str) -> Point3:
    """Charging station at the roof centre of the named building."""
    for c in obstacle_map.cuboids:
        if c.id == building_id:
            return roof_center(c)
    raise ScenarioError('station.on_building', f"no building with id {building_id!r}")


def _parse_station(data: Dict[str, Any], raw_map: ObstacleMap,
                   obstacle_map: ObstacleMap) -> Tuple[Point3, Optional[str]]:
    """Roof stations name a building of the unmerged map; explicit points must clear the merged one."""
    section = _section(data, 'station', required=True)
    if 'on_building' in section:
        building_id = str(section['on_building'])
        return place_station_on_roof(raw_map, building_id), building_id
    station = _parse_point(section, 'station')
    if not _in_bounds(station, obstacle_map.bounds):
        raise ScenarioError('station', 'lies outside the map bounds')
    building = find_enclosing(obstacle_map, station)
    if building is not None:
        raise ScenarioError('station', f"inside building {building.id!r}")
    return station, None


def _parse_budget(data: Dict[str, Any], v_uav: float) -> LinkBudget:
    section = _section(data, 'link')
    try:
        return LinkBudget(ber_loose=_number(section, 'ber_loose', 'link', Config.BER_LOOSE),
                          ber_strict=_number(section, 'ber_strict', 'link', Config.BER_STRICT),
                          d_ref=_number(section, 'd_ref', 'link', Config.D_REF),
                          v_uav=v_uav)
    except ValueError as e:
        raise ScenarioError('link', str(e)) from None


def _parse_grid(data: Dict[str, Any], obstacle_map: ObstacleMap) -> Tuple[GridSpec, bool]:
    section = _section(data, 'grid')
    resolution = _number(section, 'resolution', 'grid', Config.GRID_RESOLUTION)
    dx = _number(section, 'dx', 'grid', resolution)
    dy = _number(section, 'dy', 'grid', resolution)
    auto = section.get('altitude') == 'auto'
    if auto:
        altitude = suggest_altitude(obstacle_map, Config.ALTITUDE_CLEARANCE)
    else:
        altitude = _number(section, 'altitude', 'grid', Config.UAV_ALTITUDE)
    bx0, bx1, by0, by1 = obstacle_map.bounds
    try:
        spec = GridSpec(bx0, bx1, by0, by1, dx, dy, altitude)
    except ValueError as e:
        raise ScenarioError('grid', str(e)) from None
    if altitude <= obstacle_map.tallest:
        logger.warning("Grid altitude %.1f m is not above the tallest building (%.1f m)",
                       altitude, obstacle_map.tallest)
    return spec, auto


def _parse_mission(data: Dict[str, Any], station: Point3,
                   users: Sequence[User]) -> Tuple[MissionSpec, Optional[float]]:
    section = _section(data, 'mission')
    i_w = _number(section, 'i_w', 'mission', Config.I_W)
    v_uav = _number(section, 'v_uav', 'mission', Config.UAV_SPEED)
    p_uav = _number(section, 'p_uav', 'mission', None)
    has_energy = section.get('e_max') is not None
    if has_energy and section.get('t_max') is not None:
        raise ScenarioError('mission', 'give either t_max or e_max with p_uav, not both')
    try:
        if has_energy:
            if p_uav is None:
                raise ScenarioError('mission.p_uav', 'required with e_max')
            mission = MissionSpec.from_energy(station, users, _number(section, 'e_max', 'mission'), p_uav,
                                              i_w, v_uav)
        else:
            mission = MissionSpec(station, users, i_w, _number(section, 't_max', 'mission', Config.T_MAX), v_uav)
    except ValueError as e:
        raise ScenarioError('mission', str(e)) from None
    if p_uav is not None and not (p_uav > 0):
        raise ScenarioError('mission.p_uav', 'must be > 0')
    return mission, p_uav


def _parse_solvers(data: Dict[str, Any]) -> Tuple[int, GaConfig]:
    section = _section(data, 'solvers')
    iterations = _integer(section, 'iterations', 'solvers', Config.HEURISTIC_ITERATIONS)
    if iterations < 1:
        raise ScenarioError('solvers.iterations', 'must be >= 1')
    ga = section.get('ga') or {}
    if not isinstance(ga, dict):
        raise ScenarioError('solvers.ga', 'must be an object')
    defaults = GaConfig()
    try:
        cfg = GaConfig(population=_integer(ga, 'population', 'solvers.ga', defaults.population),
                       generations=_integer(ga, 'generations', 'solvers.ga', defaults.generations),
                       crossover_rate=_number(ga, 'crossover_rate', 'solvers.ga', defaults.crossover_rate),
                       mutation_rate=_number(ga, 'mutation_rate', 'solvers.ga', defaults.mutation_rate),
                       lam=_number(ga, 'lambda', 'solvers.ga', defaults.lam),
                       mu=_number(ga, 'mu', 'solvers.ga', defaults.mu),
                       tournament_size=_integer(ga, 'tournament_size', 'solvers.ga', defaults.tournament_size),
                       elite=_integer(ga, 'elite', 'solvers.ga', defaults.elite))
    except ValueError as e:
        raise ScenarioError('solvers.ga', str(e)) from None
    return iterations, cfg


def scenario_from_dict(data: Dict[str, Any]) -> Scenario:
    """
    Validate a decoded scenario document.

    Raises:
        ScenarioError: naming the offending field and the violated constraint
    """
    if not isinstance(data, dict):
        raise ScenarioError('document', 'must be a JSON object')
    unknown = sorted(set(data) - _TOP_LEVEL_KEYS)
    if unknown:
        raise ScenarioError(unknown[0], 'unknown field')
    version = _integer(data, 'version', '', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError('version', f"unsupported schema version {version}")
    seed = _integer(data, 'seed', '', None)
    if seed is not None and seed < 0:
        raise ScenarioError('seed', 'must be >= 0')

    bounds = _parse_bounds(data)
    raw_map = _parse_obstacles(data, bounds)
    merge = data.get('merge', False)
    if not isinstance(merge, bool):
        raise ScenarioError('merge', 'must be true or false')
    obstacle_map = merge_cuboids(raw_map) if merge else raw_map
    station, station_building = _parse_station(data, raw_map, obstacle_map)

    users = _parse_users(data, obstacle_map)
    grid, altitude_auto = _parse_grid(data, obstacle_map)
    if station.z > grid.altitude:
        raise ScenarioError('station.z', f"station altitude {station.z} exceeds grid altitude {grid.altitude}")
    mission, p_uav = _parse_mission(data, station, users)
    budget = _parse_budget(data, mission.v_uav)
    iterations, ga = _parse_solvers(data)

    return Scenario(obstacle_map, users, station, budget, grid, mission, iterations, ga, seed, p_uav,
                    station_building, altitude_auto, merge, raw_map if merge else None)


def load_scenario(path: str) -> Scenario:
    """
    Load and validate a scenario file.

    Raises:
        ScenarioError: unreadable file, invalid JSON, or a failed validation
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ScenarioError('file', f"cannot read: {e.strerror or e}", path=path) from None
    except json.JSONDecodeError as e:
        raise ScenarioError('document', f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}",
                            path=path) from None
    try:
        scenario = scenario_from_dict(data)
    except ScenarioError as e:
        raise ScenarioError(e.field, e.constraint, e.row, path) from None
    logger.info("Loaded scenario %s: %d obstacles, %d users, grid %d x %d at %.1f m",
                path, len(scenario.obstacle_map), len(scenario.users),
                *grid_dimensions(scenario.grid), scenario.grid.altitude)
    return scenario


def _cuboid_dict(c: Cuboid) -> Dict[str, Any]:
    return {'id': c.id, 'x_min': c.x_min, 'x_max': c.x_max, 'y_min': c.y_min, 'y_max': c.y_max,
            'height': c.height}


def scenario_to_dict(scenario: Scenario) -> Dict[str, Any]:
    # merged scenarios are written unmerged so roof stations resolve the same way on reload
    source = scenario.source_obstacles if scenario.source_obstacles is not None else scenario.obstacle_map
    bx0, bx1, by0, by1 = scenario.obstacle_map.bounds
    if scenario.station_building is not None:
        station = {'on_building': scenario.station_building}
    else:
        station = {'x': scenario.station.x, 'y': scenario.station.y, 'z': scenario.station.z}
    mission = {'i_w': scenario.mission.i_w, 't_max': scenario.mission.t_max, 'v_uav': scenario.mission.v_uav}
    if scenario.p_uav is not None:
        mission['p_uav'] = scenario.p_uav
    ga = scenario.ga
    data = {
        'version': SCHEMA_VERSION,
        'bounds': {'x_min': bx0, 'x_max': bx1, 'y_min': by0, 'y_max': by1},
        'obstacles': [_cuboid_dict(c) for c in source.cuboids],
        'merge': scenario.merged,
        'users': [{'id': u.id, 'x': u.position.x, 'y': u.position.y, 'z': u.position.z, 'weight': u.weight}
                  for u in scenario.users],
        'station': station,
        'link': {'ber_loose': scenario.budget.ber_loose, 'ber_strict': scenario.budget.ber_strict,
                 'd_ref': scenario.budget.d_ref},
        'grid': {'dx': scenario.grid.dx, 'dy': scenario.grid.dy,
                 'altitude': 'auto' if scenario.altitude_auto else scenario.grid.altitude},
        'mission': mission,
        'solvers': {'iterations': scenario.iterations,
                    'ga': {'population': ga.population, 'generations': ga.generations,
                           'crossover_rate': ga.crossover_rate, 'mutation_rate': ga.mutation_rate,
                           'lambda': ga.lam, 'mu': ga.mu, 'tournament_size': ga.tournament_size,
                           'elite': ga.elite}},
    }
    if scenario.seed is not None:
        data['seed'] = scenario.seed
    return data


def write_json(data: Any, path: str):
    """Write JSON with sorted keys and a trailing newline."""
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, sort_keys=True, indent=2)
            f.write('\n')
    except OSError as e:
        raise ScenarioError('file', f"cannot write: {e.strerror or e}", path=path) from None


def save_scenario(scenario: Scenario, path: str):
    write_json(scenario_to_dict(scenario), path)


# ---------------------------------------------------------------------------
# Footprint tables
# ---------------------------------------------------------------------------

def _cell(row: pd.Series, column: str) -> str:
    raw = row.get(column)
    return raw.strip() if isinstance(raw, str) else ''


def read_footprints(path_in: str, default_height: Optional[float] = None) -> ObstacleMap:
    """
    Read a CSV table of axis-aligned footprints, one cuboid per row.

    Columns: x_min, x_max, y_min, y_max, and optionally id and height. A
    blank height takes `default_height`. Blank lines are skipped.

    Raises:
        ScenarioError: unreadable file, missing column, or a malformed row
            (the error carries the file line number)
    """
    try:
        table = pd.read_csv(path_in, dtype=str, keep_default_na=False, skipinitialspace=True,
                            skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        logger.info("Footprint table %s is empty", path_in)
        return ObstacleMap()
    except pd.errors.ParserError as e:
        raise ScenarioError('table', str(e).strip(), path=path_in) from None
    except OSError as e:
        raise ScenarioError('file', f"cannot read: {e.strerror or e}", path=path_in) from None

    table.columns = [str(c).strip() for c in table.columns]
    for column in _FOOTPRINT_COLUMNS:
        if column not in table.columns:
            raise ScenarioError(column, 'missing column', path=path_in)
    has_height = 'height' in table.columns

    cuboids = []
    for index, row in table.iterrows():
        line = int(index) + 2  # header is line 1
        if not any(_cell(row, column) for column in table.columns):
            continue
        values = []
        for column in _FOOTPRINT_COLUMNS:
            raw = _cell(row, column)
            if not raw:
                raise ScenarioError(column, 'missing value', row=line, path=path_in)
            try:
                values.append(float(raw))
            except ValueError:
                raise ScenarioError(column, f"not a number: {raw!r}", row=line, path=path_in) from None
        raw_height = _cell(row, 'height') if has_height else ''
        if raw_height:
            try:
                height = float(raw_height)
            except ValueError:
                raise ScenarioError('height', f"not a number: {raw_height!r}", row=line, path=path_in) from None
        elif default_height is not None:
            height = float(default_height)
        else:
            raise ScenarioError('height', 'missing and no default height given', row=line, path=path_in)
        cid = _cell(row, 'id') or f"f{line - 1}"
        try:
            cuboids.append(Cuboid(*values, height, id=cid))
        except ValueError as e:
            raise ScenarioError('footprint', str(e), row=line, path=path_in) from None

    return ObstacleMap(tuple(cuboids))


def convert_footprints(path_in: str, default_height: Optional[float] = None) -> ObstacleMap:
    """Footprint table to cuboids, with adjacent boxes of identical height merged (tolerance 0)."""
    raw_map = read_footprints(path_in, default_height)
    merged = merge_cuboids(raw_map, FOOTPRINT_MERGE_TOLERANCE)
    logger.info("Converted %s: %d footprints -> %d cuboids", path_in, len(raw_map), len(merged))
    return merged


def save_footprints(obstacle_map: ObstacleMap, path: str):
    """Write cuboids as a footprint table readable by convert_footprints."""
    table = pd.DataFrame([_cuboid_dict(c) for c in obstacle_map.cuboids],
                         columns=['id', 'x_min', 'x_max', 'y_min', 'y_max', 'height'])
    try:
        table.to_csv(path, index=False)
    except OSError as e:
        raise ScenarioError('file', f"cannot write: {e.strerror or e}", path=path) from None


def obstacles_to_dict(obstacle_map: ObstacleMap) -> Dict[str, Any]:
    """Scenario fragment holding bounds and obstacles."""
    bx0, bx1, by0, by1 = obstacle_map.bounds
    return {'bounds': {'x_min': bx0, 'x_max': bx1, 'y_min': by0, 'y_max': by1},
            'obstacles': [_cuboid_dict(c) for c in obstacle_map.cuboids]}


# ---------------------------------------------------------------------------
# Rasters and reports
# ---------------------------------------------------------------------------

def export_grid(grid: ServiceAreaGrid, path: str):
    """CSV raster: one row per m_y (ascending), one column per m_x."""
    try:
        pd.DataFrame(grid.cells.T).to_csv(path, header=False, index=False)
    except OSError as e:
        raise ScenarioError('file', f"cannot write: {e.strerror or e}", path=path) from None


def load_grid(path: str, spec: GridSpec, user_id: str) -> ServiceAreaGrid:
    try:
        table = pd.read_csv(path, header=None, dtype=np.uint8)
    except OSError as e:
        raise ScenarioError('file', f"cannot read: {e.strerror or e}", path=path) from None
    except ValueError as e:
        raise ScenarioError('raster', str(e), path=path) from None
    try:
        return ServiceAreaGrid(spec, user_id, table.to_numpy().T)
    except ValueError as e:
        raise ScenarioError('raster', str(e), path=path) from None


def build_report(tour: Tour, scenario: Scenario, solver: str, seed: int, iterations: int,
                 mission: Optional[MissionSpec] = None, wall_time: Optional[float] = None) -> TrajectoryReport:
    """
    Per-user service records for a tour, with the achieved BER at each
    service point and the priority-order compliance count.
    """
    mission = mission or scenario.mission
    users = scenario.users
    records = []
    for i, user in enumerate(users):
        point = tour.service_points[i]
        d = float(distances(np.array([point.as_tuple()]), user.position)[0])
        records.append(UserRecord(
            id=user.id,
            weight=user.weight,
            arrival_time=float(tour.arrival_times[i]),
            service_point=point.as_tuple(),
            ber_threshold=ber_threshold(user.weight, scenario.budget),
            ber=ber_at_distance(d, scenario.budget),
            qos_met=validate_service_point(point, user, scenario.obstacle_map, scenario.budget),
            reintegrated=i in tour.reintegrated,
        ))
    compliant, total = priority_compliance(tour, users)
    energy = mission_energy(tour, scenario.p_uav) if scenario.p_uav is not None else None
    return TrajectoryReport(solver, int(seed), int(iterations), tuple(users[i].id for i in tour.order),
                            float(tour.end_time), float(tour.objective), bool(tour.feasible), bool(tour.exact),
                            float(mission.i_w), float(mission.t_max), compliant, total, tuple(records),
                            energy, wall_time)


def report_to_dict(report: TrajectoryReport) -> Dict[str, Any]:
    data = {
        'version': SCHEMA_VERSION,
        'solver': report.solver,
        'seed': report.seed,
        'iterations': report.iterations,
        'order': list(report.order),
        'end_time': report.end_time,
        'objective': report.objective,
        'feasible': report.feasible,
        'exact': report.exact,
        'i_w': report.i_w,
        't_max': report.t_max,
        'compliant_pairs': report.compliant_pairs,
        'total_pairs': report.total_pairs,
        'energy': report.energy,
        'records': [{'id': r.id, 'weight': r.weight, 'arrival_time': r.arrival_time,
                     'service_point': list(r.service_point), 'ber_threshold': r.ber_threshold,
                     'ber': r.ber, 'qos_met': r.qos_met, 'reintegrated': r.reintegrated}
                    for r in report.records],
    }
    if report.wall_time is not None:
        data['wall_time'] = report.wall_time
    return data


def save_report(report: TrajectoryReport, path: str):
    write_json(report_to_dict(report), path)


def load_report(path: str) -> TrajectoryReport:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ScenarioError('file', f"cannot read: {e.strerror or e}", path=path) from None
    except json.JSONDecodeError as e:
        raise ScenarioError('document', f"invalid JSON: {e.msg}", path=path) from None
    try:
        records = tuple(UserRecord(r['id'], r['weight'], r['arrival_time'], tuple(r['service_point']),
                                   r['ber_threshold'], r['ber'], r['qos_met'], r.get('reintegrated', False))
                        for r in data['records'])
        return TrajectoryReport(data['solver'], data['seed'], data['iterations'], tuple(data['order']),
                                data['end_time'], data['objective'], data['feasible'], data['exact'],
                                data['i_w'], data['t_max'], data['compliant_pairs'], data['total_pairs'],
                                records, data.get('energy'), data.get('wall_time'))
    except (KeyError, TypeError) as e:
        raise ScenarioError('report', f"malformed report: {e}", path=path) from None


# ---------------------------------------------------------------------------
# GeoJSON
# ---------------------------------------------------------------------------

def _feature(geometry: Dict[str, Any], properties: Dict[str, Any]) -> Dict[str, Any]:
    return {'type': 'Feature', 'geometry': geometry, 'properties': properties}


def trajectory_geojson(report: TrajectoryReport, scenario: Scenario) -> Dict[str, Any]:
    """Flight path as a LineString plus Point features for station, users and service points."""
    by_id = {r.id: r for r in report.records}
    station = list(scenario.station.as_tuple())
    path = [station] + [list(by_id[uid].service_point) for uid in report.order] + [station]
    features = [
        _feature({'type': 'LineString', 'coordinates': path},
                 {'role': 'trajectory', 'solver': report.solver, 'end_time': report.end_time,
                  'objective': report.objective, 'feasible': report.feasible}),
        _feature({'type': 'Point', 'coordinates': station}, {'role': 'station'}),
    ]
    for user in scenario.users:
        record = by_id[user.id]
        features.append(_feature({'type': 'Point', 'coordinates': list(user.position.as_tuple())},
                                 {'role': 'user', 'user_id': user.id, 'weight': user.weight}))
        features.append(_feature({'type': 'Point', 'coordinates': list(record.service_point)},
                                 {'role': 'service_point', 'user_id': user.id,
                                  'arrival_time': record.arrival_time, 'reintegrated': record.reintegrated}))
    return {'type': 'FeatureCollection', 'features': features}


def coverage_geojson(grids: Sequence[ServiceAreaGrid]) -> Dict[str, Any]:
    """One Point feature per valid cell per user."""
    features = []
    for grid in grids:
        for m_x, m_y in grid.valid_cells():
            p = cell_center(grid.spec, int(m_x), int(m_y))
            features.append(_feature({'type': 'Point', 'coordinates': [p.x, p.y, p.z]},
                                     {'user_id': grid.user_id, 'm_x': int(m_x), 'm_y': int(m_y)}))
    return {'type': 'FeatureCollection', 'features': features}


# ---------------------------------------------------------------------------
# Synthetic fixtures
# ---------------------------------------------------------------------------

def _split(k: int) -> Tuple[int, int]:
    """Near-square factorisation n_x * n_y = k."""
    n_x = max(d for d in range(1, int(math.isqrt(k)) + 1) if k % d == 0)
    return n_x, k // n_x


def synthetic_city(n_blocks: int, n_footprints: int, seed: int, block: float = 40.0,
                   street: float = 20.0) -> ObstacleMap:
    """
    City of n_blocks square blocks separated by streets, each block cut
    into equal-height pieces so that merging recovers exactly n_blocks
    cuboids. Pieces are spread as evenly as possible over the blocks.
    """
    if n_blocks < 1 or n_footprints < n_blocks:
        raise ValueError("need 1 <= n_blocks <= n_footprints")
    rng = derive_rng(seed, 'synthetic_city', 0)
    heights = rng.integers(20, 251, size=n_blocks)
    cols = math.ceil(math.sqrt(n_blocks))
    rows = math.ceil(n_blocks / cols)
    per_block, extra = divmod(n_footprints, n_blocks)
    pitch = block + street

    cuboids = []
    for b in range(n_blocks):
        x0 = street + (b % cols) * pitch
        y0 = street + (b // cols) * pitch
        n_x, n_y = _split(per_block + (1 if b < extra else 0))
        xs = np.linspace(x0, x0 + block, n_x + 1)
        ys = np.linspace(y0, y0 + block, n_y + 1)
        for i in range(n_x):
            for j in range(n_y):
                cuboids.append(Cuboid(float(xs[i]), float(xs[i + 1]), float(ys[j]), float(ys[j + 1]),
                                      float(heights[b]), id=f"blk{b}_{i}_{j}"))
    bounds = (0.0, cols * pitch + street, 0.0, rows * pitch + street)
    return ObstacleMap(tuple(cuboids), bounds)


def random_users(obstacle_map: ObstacleMap, n: int, seed: int, margin: float = 1.0) -> List[User]:
    """
    n street-level users at least `margin` metres from every footprint,
    with weights drawn from [0.05, 1] at 0.01 resolution.
    """
    rng = derive_rng(seed, 'random_users', 0)
    bx0, bx1, by0, by1 = obstacle_map.bounds
    boxes = obstacle_map.boxes
    users = []
    attempts = 0
    while len(users) < n:
        attempts += 1
        if attempts > 1000 * max(n, 1):
            raise ValueError(f"could not place {n} users in the free space of the map")
        x = round(float(rng.uniform(bx0, bx1)), 2)
        y = round(float(rng.uniform(by0, by1)), 2)
        near = ((x >= boxes[:, 0] - margin) & (x <= boxes[:, 1] + margin)
                & (y >= boxes[:, 2] - margin) & (y <= boxes[:, 3] + margin))
        if near.any():
            continue
        weight = round(float(rng.uniform(0.05, 1.0)), 2)
        users.append(User(f"u{len(users) + 1}", Point3(x, y, 0.0), weight))
    return users


def make_scenario(obstacle_map: ObstacleMap, users: Sequence[User], station: Point3, **overrides) -> Scenario:
    """Scenario over a map with template defaults; keyword overrides replace fields."""
    bx0, bx1, by0, by1 = obstacle_map.bounds
    grid = GridSpec(bx0, bx1, by0, by1, Config.GRID_RESOLUTION, Config.GRID_RESOLUTION, Config.UAV_ALTITUDE)
    mission = MissionSpec(station, tuple(users), Config.I_W, Config.T_MAX, Config.UAV_SPEED)
    budget = LinkBudget(Config.BER_LOOSE, Config.BER_STRICT, Config.D_REF, Config.UAV_SPEED)
    scenario = Scenario(obstacle_map, tuple(users), station, budget, grid, mission)
    return replace(scenario, **overrides) if overrides else scenario
