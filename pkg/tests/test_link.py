"""
Tests for the Q-function, BER thresholds, distance law and service-point validation.
"""

import numpy as np
import pytest

from geometry import ObstacleMap, Point3
from link import (LinkBudget, User, ber_at_distance, ber_threshold, max_service_distance, q_function, q_inverse,
                  service_mask, validate_service_point)


def test_q_function_known_values():
    assert q_function(0.0) == 0.5
    assert q_function(3.0902) == pytest.approx(1.0e-3, rel=1e-3)
    assert q_function(4.7534) == pytest.approx(1.0e-6, rel=1e-3)


def test_q_function_is_decreasing():
    xs = np.linspace(-5, 8, 200)
    values = [q_function(x) for x in xs]
    assert all(a > b for a, b in zip(values, values[1:]))


@pytest.mark.parametrize('exponent', range(1, 9))
def test_q_inverse_round_trip(exponent):
    p = 10.0 ** -exponent
    assert q_function(q_inverse(p)) == pytest.approx(p, rel=1e-9)


def test_q_inverse_reference_points():
    assert q_inverse(1e-3) == pytest.approx(3.0902, abs=1e-3)
    assert q_inverse(1e-6) == pytest.approx(4.7534, abs=1e-3)
    assert q_inverse(0.5 - 1e-12) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize('p', [0.0, 0.5, 0.7, -1e-3, 1.0])
def test_q_inverse_domain(p):
    with pytest.raises(ValueError):
        q_inverse(p)


def test_ber_threshold_endpoints_and_midpoint(budget):
    assert ber_threshold(0.0, budget) == 1e-3
    assert ber_threshold(1.0, budget) == 1e-6
    assert ber_threshold(0.5, budget) == pytest.approx(10 ** -4.5, rel=1e-12)
    with pytest.raises(ValueError):
        ber_threshold(1.5, budget)


def test_max_service_distance_endpoints(budget):
    assert max_service_distance(0.0, budget) == 500.0
    ratio = max_service_distance(1.0, budget) / max_service_distance(0.0, budget)
    assert ratio == pytest.approx(q_inverse(1e-3) / q_inverse(1e-6), rel=1e-9)
    assert max_service_distance(1.0, budget) == pytest.approx(325.06, abs=0.05)
    # threshold 10^-4.5 at w=0.5, so the divisor is q_inverse(3.1623e-5) ~ 4.0004
    assert max_service_distance(0.5, budget) == pytest.approx(386.25, abs=0.1)


def test_max_service_distance_strictly_decreasing(budget):
    ds = [max_service_distance(w, budget) for w in np.linspace(0, 1, 101)]
    assert all(a > b for a, b in zip(ds, ds[1:]))


def test_ber_at_max_distance_meets_threshold(budget):
    for w in (0.0, 0.3, 0.5, 1.0):
        d = max_service_distance(w, budget)
        assert ber_at_distance(d, budget) == pytest.approx(ber_threshold(w, budget), rel=1e-6)
    assert ber_at_distance(0.0, budget) == 0.0


def test_link_budget_validation():
    with pytest.raises(ValueError):
        LinkBudget(ber_loose=1e-6, ber_strict=1e-3)
    with pytest.raises(ValueError):
        LinkBudget(d_ref=0)
    with pytest.raises(ValueError):
        LinkBudget(v_uav=-1)


def test_user_weight_range():
    with pytest.raises(ValueError):
        User('u', Point3(0, 0, 0), 0.0)
    with pytest.raises(ValueError):
        User('u', Point3(0, 0, 0), 1.2)
    assert User('u', Point3(0, 0, 0), 1.0).weight == 1.0


def test_validate_service_point_distance_bound(budget, empty_map):
    user = User('u', Point3(0, 0, 0), 0.5)
    d_max = max_service_distance(0.5, budget)
    assert validate_service_point(Point3(0, 0, 0.9 * d_max), user, empty_map, budget)
    assert not validate_service_point(Point3(0, 0, 1.1 * d_max), user, empty_map, budget)


def test_validate_service_point_blocked_geometry(budget, wall):
    obstacle_map = ObstacleMap((wall,))
    user = User('u', Point3(10, 0, 0.5), 0.5)
    assert not validate_service_point(Point3(0, 0, 5), user, obstacle_map, budget)
    assert validate_service_point(Point3(0, 0, 50), user, obstacle_map, budget)


def test_service_mask_matches_pointwise_validation(budget, block_map):
    user = User('u', Point3(100.0, 20.0, 0.0), 0.7)
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(-200, 400, 500), rng.uniform(-200, 400, 500), np.full(500, 260.0)])
    mask = service_mask(pts, user, block_map, budget)
    expected = [validate_service_point(Point3(*p), user, block_map, budget) for p in pts]
    assert mask.tolist() == expected
    assert 0 < mask.sum() < len(pts)
