"""
Tests for scenario loading and validation, footprint conversion and the
report / raster / GeoJSON writers.
"""

import json
from dataclasses import replace

import numpy as np
import pytest

from config import Config
from coverage_grid import GridSpec, ServiceAreaGrid, compute_service_areas, grid_dimensions
from geometry import Cuboid, Point3, find_enclosing
from routing import heuristic_solve
from scenario_io import (build_report, convert_footprints, export_grid, load_grid, load_report, load_scenario,
                         make_scenario, obstacles_to_dict, place_station_on_roof, random_users, read_footprints,
                         save_footprints, save_report, save_scenario, scenario_from_dict, synthetic_city,
                         trajectory_geojson)
from utils.errors import ScenarioError


def _minimal():
    return {
        'bounds': {'x_min': 0, 'x_max': 100, 'y_min': 0, 'y_max': 100},
        'users': [{'id': 'u1', 'x': 50, 'y': 50, 'weight': 0.5}],
        'station': {'x': 0, 'y': 0, 'z': 0},
    }


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_load_template(template_path):
    scenario = load_scenario(template_path)
    assert len(scenario.obstacle_map) == 6
    assert [u.id for u in scenario.users] == ['u1', 'u2', 'u3', 'u4', 'u5']
    assert scenario.station == Point3(80.0, 80.0, 120.0)
    assert scenario.station_building == 'b1'
    assert grid_dimensions(scenario.grid) == (41, 41)
    assert scenario.grid.altitude == 260.0
    assert scenario.mission.t_max == 2100.0
    assert scenario.seed == 7
    assert scenario.ga.population == 100


def test_minimal_scenario_defaults():
    scenario = scenario_from_dict(_minimal())
    assert len(scenario.obstacle_map) == 0
    assert scenario.users[0].position == Point3(50.0, 50.0, 0.0)
    assert scenario.seed is None
    assert scenario.grid.dx == Config.GRID_RESOLUTION
    assert scenario.grid.altitude == Config.UAV_ALTITUDE
    assert scenario.mission.i_w == Config.I_W
    assert scenario.budget.d_ref == Config.D_REF


def test_user_inside_building_is_rejected():
    data = _minimal()
    data['obstacles'] = [{'id': 'tower', 'x_min': 40, 'x_max': 60, 'y_min': 40, 'y_max': 60, 'height': 30}]
    with pytest.raises(ScenarioError, match="user 'u1' is inside building 'tower'"):
        scenario_from_dict(data)


@pytest.mark.parametrize('mutate, field', [
    (lambda d: d.update(colour='red'), 'colour'),
    (lambda d: d.pop('bounds'), 'bounds'),
    (lambda d: d['bounds'].update(x_max=-1), 'bounds'),
    (lambda d: d['users'][0].update(weight=0), 'users[0].weight'),
    (lambda d: d['users'][0].update(x=500), 'users[0]'),
    (lambda d: d['users'].append({'id': 'u1', 'x': 10, 'y': 10, 'weight': 0.2}), 'users[1].id'),
    (lambda d: d.update(users=[]), 'users'),
    (lambda d: d.update(station={'on_building': 'nowhere'}), 'station.on_building'),
    (lambda d: d['station'].update(z=300), 'station.z'),
    (lambda d: d.update(mission={'t_max': 100, 'e_max': 1000, 'p_uav': 10}), 'mission'),
    (lambda d: d.update(mission={'e_max': 1000}), 'mission.p_uav'),
    (lambda d: d.update(link={'ber_loose': 1e-7}), 'link'),
    (lambda d: d.update(grid={'resolution': 0}), 'grid'),
    (lambda d: d.update(solvers={'iterations': 0}), 'solvers.iterations'),
    (lambda d: d.update(solvers={'ga': {'population': 1}}), 'solvers.ga'),
    (lambda d: d.update(version=2), 'version'),
])
def test_invalid_scenarios_name_the_field(mutate, field):
    data = _minimal()
    mutate(data)
    with pytest.raises(ScenarioError) as excinfo:
        scenario_from_dict(data)
    assert excinfo.value.field == field


def test_energy_budget_sets_flight_time():
    data = _minimal()
    data['mission'] = {'e_max': 420000, 'p_uav': 200}
    scenario = scenario_from_dict(data)
    assert scenario.mission.t_max == pytest.approx(2100.0)
    assert scenario.p_uav == 200.0


def test_auto_altitude_clears_tallest_building():
    data = _minimal()
    data['obstacles'] = [{'x_min': 10, 'x_max': 20, 'y_min': 10, 'y_max': 20, 'height': 75}]
    data['grid'] = {'altitude': 'auto'}
    scenario = scenario_from_dict(data)
    assert scenario.grid.altitude == 75 + Config.ALTITUDE_CLEARANCE
    assert scenario.altitude_auto


def test_merge_flag_and_station_on_roof():
    data = _minimal()
    data['obstacles'] = [{'id': 'a', 'x_min': 10, 'x_max': 20, 'y_min': 10, 'y_max': 20, 'height': 30},
                         {'id': 'b', 'x_min': 20, 'x_max': 30, 'y_min': 10, 'y_max': 20, 'height': 30}]
    data['station'] = {'on_building': 'b'}
    data['merge'] = True
    scenario = scenario_from_dict(data)
    assert len(scenario.obstacle_map) == 1
    assert scenario.obstacle_map.cuboids[0] == Cuboid(10, 30, 10, 20, 30, 'a')
    assert scenario.station == Point3(25.0, 15.0, 30.0)


def test_place_station_on_roof(block_map):
    assert place_station_on_roof(block_map, 'b2') == Point3(140.0, 140.0, 200.0)
    with pytest.raises(ScenarioError):
        place_station_on_roof(block_map, 'b9')


def test_load_scenario_reports_path_and_json_errors(tmp_path):
    path = _write(tmp_path, 'broken.json', '{"bounds": ')
    with pytest.raises(ScenarioError, match='invalid JSON') as excinfo:
        load_scenario(path)
    assert excinfo.value.path == path
    with pytest.raises(ScenarioError, match='cannot read'):
        load_scenario(str(tmp_path / 'missing.json'))


def test_scenario_save_and_reload(tmp_path, template_path):
    scenario = load_scenario(template_path)
    path = str(tmp_path / 'copy.json')
    save_scenario(scenario, path)
    assert load_scenario(path) == scenario


def test_convert_merges_adjacent_footprints(tmp_path):
    path = _write(tmp_path, 'fp.csv',
                  "id,x_min,x_max,y_min,y_max,height\n"
                  "a,0,10,0,10,20\n"
                  "b,10,20,0,10,20\n"
                  "c,0,10,10,20,20\n"
                  "d,10,20,10,20,20\n")
    obstacle_map = convert_footprints(path)
    assert len(obstacle_map) == 1
    assert obstacle_map.cuboids[0] == Cuboid(0, 20, 0, 20, 20, 'a')


def test_convert_keeps_different_heights_apart(tmp_path):
    path = _write(tmp_path, 'fp.csv', "x_min,x_max,y_min,y_max,height\n0,10,0,10,20\n10,20,0,10,25\n")
    assert len(convert_footprints(path)) == 2


def test_convert_empty_file(tmp_path):
    assert len(convert_footprints(_write(tmp_path, 'empty.csv', ''))) == 0


def test_convert_reports_bad_row(tmp_path):
    path = _write(tmp_path, 'fp.csv', "id,x_min,x_max,y_min,y_max,height\na,0,10,0,10,5\nb,10,abc,0,10,5\n")
    with pytest.raises(ScenarioError) as excinfo:
        convert_footprints(path)
    assert excinfo.value.row == 3
    assert excinfo.value.field == 'x_max'


def test_convert_rejects_degenerate_footprint(tmp_path):
    path = _write(tmp_path, 'fp.csv', "x_min,x_max,y_min,y_max,height\n10,10,0,10,5\n")
    with pytest.raises(ScenarioError) as excinfo:
        convert_footprints(path)
    assert excinfo.value.row == 2


def test_convert_default_height(tmp_path):
    path = _write(tmp_path, 'fp.csv', "x_min,x_max,y_min,y_max,height\n0,10,0,10,\n")
    with pytest.raises(ScenarioError, match='no default height'):
        convert_footprints(path)
    assert convert_footprints(path, default_height=12.0).cuboids[0].height == 12.0


def test_convert_missing_column(tmp_path):
    path = _write(tmp_path, 'fp.csv', "x_min,x_max,y_min,height\n0,10,0,5\n")
    with pytest.raises(ScenarioError, match='y_max'):
        convert_footprints(path)


def test_synthetic_city_merges_back_to_blocks(tmp_path):
    city = synthetic_city(128, 3150, seed=1)
    assert len(city) == 3150
    path = str(tmp_path / 'city.csv')
    save_footprints(city, path)
    merged = convert_footprints(path)
    assert len(merged) == 128
    assert sum(c.footprint_area for c in merged.cuboids) == pytest.approx(128 * 40.0 * 40.0)


def test_obstacles_to_dict_loads_as_scenario_fragment(block_map):
    data = obstacles_to_dict(block_map)
    data.update(users=[{'id': 'u', 'x': 100, 'y': 20, 'weight': 0.5}], station={'x': 0, 'y': 0})
    assert scenario_from_dict(data).obstacle_map == block_map


def test_random_users_avoid_footprints():
    city = synthetic_city(9, 9, seed=3)
    users = random_users(city, 20, seed=5)
    assert len(users) == 20
    assert [u.id for u in users][:2] == ['u1', 'u2']
    for u in users:
        assert find_enclosing(city, u.position) is None
        assert 0.05 <= u.weight <= 1.0
    assert users == random_users(city, 20, seed=5)


def test_export_grid_layout(tmp_path, block_areas):
    grid = block_areas.grids[0]
    path = str(tmp_path / 'cov.csv')
    export_grid(grid, path)
    m_x, m_y = grid_dimensions(grid.spec)
    lines = open(path, encoding='utf-8').read().splitlines()
    assert len(lines) == m_y
    assert all(len(line.split(',')) == m_x for line in lines)
    assert np.array_equal(load_grid(path, grid.spec, grid.user_id).cells, grid.cells)


def test_export_all_zero_grid(tmp_path):
    spec = GridSpec(0, 30, 0, 20, 10, 10, 50)
    grid = ServiceAreaGrid(spec, 'u', np.zeros((4, 3), dtype=np.uint8))
    path = str(tmp_path / 'zero.csv')
    export_grid(grid, path)
    assert open(path, encoding='utf-8').read().splitlines() == ['0,0,0,0'] * 3


def _template_report(template_path, iterations=5):
    scenario = load_scenario(template_path)
    areas = compute_service_areas(scenario.users, scenario.obstacle_map, scenario.budget, scenario.grid)
    tour = heuristic_solve(areas, scenario.mission, iterations, seed=7)
    return scenario, tour, build_report(tour, scenario, 'heuristic', 7, iterations)


def test_report_records_and_round_trip(tmp_path, template_path):
    scenario, tour, report = _template_report(template_path)
    assert report.order == tuple(scenario.users[i].id for i in tour.order)
    assert len(report.records) == len(scenario.users)
    for record in report.records:
        assert record.qos_met
        assert record.ber <= record.ber_threshold
    assert report.total_pairs == 10
    assert report.wall_time is None
    path = str(tmp_path / 'report.json')
    save_report(report, path)
    assert load_report(path) == report
    assert 'wall_time' not in json.loads(open(path, encoding='utf-8').read())


def test_report_energy_when_power_known(template_path):
    scenario, tour, _ = _template_report(template_path)
    scenario = replace(scenario, p_uav=150.0)
    report = build_report(tour, scenario, 'heuristic', 7, 5)
    assert report.energy == pytest.approx(150.0 * tour.end_time)


def test_trajectory_geojson(template_path):
    scenario, tour, report = _template_report(template_path)
    collection = trajectory_geojson(report, scenario)
    assert collection['type'] == 'FeatureCollection'
    line = collection['features'][0]
    assert line['geometry']['type'] == 'LineString'
    coordinates = line['geometry']['coordinates']
    assert len(coordinates) == len(scenario.users) + 2
    assert coordinates[0] == coordinates[-1] == [80.0, 80.0, 120.0]
    roles = [f['properties']['role'] for f in collection['features']]
    assert roles.count('user') == roles.count('service_point') == len(scenario.users)


def test_make_scenario_overrides(block_map, block_users):
    scenario = make_scenario(block_map, block_users, Point3(0, 0, 0), seed=3)
    assert scenario.seed == 3
    assert scenario.mission.users == block_users
    assert scenario.grid.x_max == 200.0


def _two_halves(station):
    data = _minimal()
    data['obstacles'] = [{'id': 'a', 'x_min': 10, 'x_max': 20, 'y_min': 10, 'y_max': 20, 'height': 30},
                         {'id': 'b', 'x_min': 20, 'x_max': 30, 'y_min': 10, 'y_max': 20, 'height': 30}]
    data['station'] = station
    data['merge'] = True
    return data


@pytest.mark.parametrize('building, roof', [('a', Point3(15.0, 15.0, 30.0)), ('b', Point3(25.0, 15.0, 30.0))])
def test_merged_scenario_with_roof_station_round_trips(tmp_path, building, roof):
    scenario = scenario_from_dict(_two_halves({'on_building': building}))
    assert scenario.station == roof
    assert len(scenario.source_obstacles) == 2
    path = str(tmp_path / 'merged.json')
    save_scenario(scenario, path)
    reloaded = load_scenario(path)
    assert reloaded == scenario
    assert reloaded.station == roof
    assert len(reloaded.obstacle_map) == 1


def test_explicit_station_is_checked_against_merged_buildings():
    # x=20 is the shared face: outside both halves, inside their union
    data = _two_halves({'x': 20, 'y': 15, 'z': 0})
    with pytest.raises(ScenarioError, match="inside building 'a'") as excinfo:
        scenario_from_dict(data)
    assert excinfo.value.field == 'station'
    data['merge'] = False
    assert scenario_from_dict(data).station == Point3(20.0, 15.0, 0.0)


def test_convert_row_numbers_count_blank_lines(tmp_path):
    path = _write(tmp_path, 'fp.csv', "id,x_min,x_max,y_min,y_max,height\na,0,10,0,10,5\n\nb,10,abc,0,10,5\n")
    with pytest.raises(ScenarioError) as excinfo:
        convert_footprints(path)
    assert excinfo.value.row == 4
    assert excinfo.value.field == 'x_max'


def test_read_footprints_skips_blank_lines_and_keeps_pieces(tmp_path):
    path = _write(tmp_path, 'fp.csv', "x_min,x_max,y_min,y_max,height\n0,10,0,10,5\n\n10,20,0,10,5\n")
    raw = read_footprints(path)
    assert [c.id for c in raw.cuboids] == ['f1', 'f3']
    assert len(convert_footprints(path)) == 1


@pytest.mark.parametrize('n_users', [7, 14])
def test_city_scenario_with_128_blocks(tmp_path, n_users):
    city = synthetic_city(128, 3150, seed=1)
    data = obstacles_to_dict(city)
    data.update(merge=True, station={'on_building': 'blk0_0_0'}, seed=1,
                users=[{'id': u.id, 'x': u.position.x, 'y': u.position.y, 'weight': u.weight}
                       for u in random_users(city, n_users, seed=1)])
    scenario = load_scenario(_write(tmp_path, 'city.json', json.dumps(data)))
    assert len(scenario.obstacle_map) == 128
    assert len(scenario.source_obstacles) == 3150
    assert len(scenario.users) == n_users
    assert scenario.station == place_station_on_roof(city, 'blk0_0_0')
    path = str(tmp_path / 'city_copy.json')
    save_scenario(scenario, path)
    assert load_scenario(path) == scenario
