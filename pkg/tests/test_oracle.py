"""
Checks on the brute-force references themselves, and agreement between the
exact side-face LoS test and dense sampling on random scenes.
"""

import pytest

from coverage_grid import GridSpec, compute_service_areas
from geometry import Cuboid, ObstacleMap, Point3, check_los, find_enclosing
from link import LinkBudget, User
from oracle import OracleConfig, brute_force_cells, brute_force_order, los_by_sampling
from routing import MissionSpec
from utils.errors import EnumerationCapError
from utils.seeding import derive_rng


def test_oracle_config_validation():
    assert OracleConfig().step > 0
    with pytest.raises(ValueError):
        OracleConfig(step=0)
    with pytest.raises(ValueError):
        OracleConfig(enumeration_cap=0)


def test_sampling_step_must_be_positive(wall):
    with pytest.raises(ValueError):
        los_by_sampling(Point3(0, 0, 5), Point3(10, 0, 0), ObstacleMap((wall,)), 0)


def test_brute_force_order_single_user():
    user = User('u', Point3(30, 40, 0), 0.5)
    spec = MissionSpec(Point3(0, 0, 0), (user,), i_w=1.0, t_max=100.0, v_uav=5.0)
    tour = brute_force_order([Point3(30, 40, 0)], (user,), spec)
    assert tour.order == (0,)
    assert tour.arrival_times == pytest.approx((10.0,))
    assert tour.end_time == pytest.approx(20.0)
    assert tour.objective == pytest.approx(5.0)


def test_brute_force_order_cap():
    users = tuple(User(f"u{k}", Point3(k, 0, 0), 0.5) for k in range(4))
    spec = MissionSpec(Point3(0, 0, 0), users)
    with pytest.raises(EnumerationCapError):
        brute_force_order([u.position for u in users], users, spec, cap=3)


def test_brute_force_order_ties_go_to_lexicographic_first():
    users = (User('a', Point3(10, 0, 0), 0.5), User('b', Point3(-10, 0, 0), 0.5))
    spec = MissionSpec(Point3(0, 0, 0), users, i_w=2.0)
    assert brute_force_order([u.position for u in users], users, spec).order == (0, 1)


def test_brute_force_cells_none_when_nothing_fits():
    spec_grid = GridSpec(0, 20, 0, 20, 10, 10, 100)
    user = User('u', Point3(10, 10, 0), 0.5)
    areas = compute_service_areas((user,), ObstacleMap(), LinkBudget(d_ref=10000.0), spec_grid)
    mission = MissionSpec(Point3(500, 500, 0), (user,), t_max=1.0)
    assert brute_force_cells(areas, mission) is None


def test_brute_force_cells_picks_nearest_lattice_point():
    spec_grid = GridSpec(0, 20, 0, 20, 10, 10, 100)
    user = User('u', Point3(10, 10, 0), 0.5)
    areas = compute_service_areas((user,), ObstacleMap(), LinkBudget(d_ref=10000.0), spec_grid)
    mission = MissionSpec(Point3(20, 20, 100), (user,))
    tour = brute_force_cells(areas, mission)
    assert tour.arrival_times == pytest.approx((0.0,))
    assert tour.objective == pytest.approx(0.0)


def _random_scene(seed, n_buildings=8):
    rng = derive_rng(seed, 'los_scene', 0)
    cuboids = []
    for k in range(n_buildings):
        x0, y0 = rng.uniform(0, 160, 2)
        w, d = rng.uniform(5, 40, 2)
        cuboids.append(Cuboid(float(x0), float(x0 + w), float(y0), float(y0 + d),
                              float(rng.uniform(10, 200)), id=f"c{k}"))
    return ObstacleMap(tuple(cuboids), (0.0, 200.0, 0.0, 200.0)), rng


def _random_user_point(obstacle_map, rng):
    boxes = obstacle_map.boxes
    while True:
        x, y = (float(v) for v in rng.uniform(0, 200, 2))
        near = ((x >= boxes[:, 0] - 1) & (x <= boxes[:, 1] + 1) & (y >= boxes[:, 2] - 1) & (y <= boxes[:, 3] + 1))
        if not near.any():
            return Point3(x, y, 0.0)


def _stable_verdict(uav, user, obstacle_map):
    """Exact verdict, or None when a 0.5 m nudge of either endpoint changes it."""
    verdict = check_los(uav, user, obstacle_map)
    for dx, dy in ((0.5, 0), (-0.5, 0), (0, 0.5), (0, -0.5)):
        moved_uav = Point3(uav.x + dx, uav.y + dy, uav.z)
        moved_user = Point3(user.x + dx, user.y + dy, user.z)
        if find_enclosing(obstacle_map, moved_user) is not None:
            return None
        if check_los(moved_uav, user, obstacle_map) != verdict or check_los(uav, moved_user, obstacle_map) != verdict:
            return None
    return verdict


def _agreement(seed, n_segments):
    obstacle_map, rng = _random_scene(seed)
    compared = blocked = 0
    for _ in range(n_segments):
        user = _random_user_point(obstacle_map, rng)
        x, y = (float(v) for v in rng.uniform(0, 200, 2))
        uav = Point3(x, y, 260.0)
        verdict = _stable_verdict(uav, user, obstacle_map)
        if verdict is None:
            continue
        assert los_by_sampling(uav, user, obstacle_map, 0.05) == verdict, (uav, user)
        compared += 1
        blocked += verdict == 0
    return compared, blocked


def test_exact_los_agrees_with_sampling():
    compared, blocked = _agreement(1, 300)
    assert compared > 200
    assert 0 < blocked < compared


@pytest.mark.slow
def test_exact_los_agrees_with_sampling_many_segments():
    total = 0
    for seed in range(10):
        compared, _ = _agreement(100 + seed, 1000)
        total += compared
    assert total > 7000
