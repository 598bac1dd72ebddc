"""
Shared fixtures. The project root is put on sys.path so the flat modules
import the same way they do from app.py.
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pytest

from config import Config
from coverage_grid import GridSpec, compute_service_areas
from geometry import Cuboid, ObstacleMap, Point3
from link import LinkBudget, User
from routing import MissionSpec


@pytest.fixture
def budget():
    return LinkBudget(ber_loose=1e-3, ber_strict=1e-6, d_ref=500.0, v_uav=5.0)


@pytest.fixture
def wall():
    """The thin wall used by the hand-checked LoS examples."""
    return Cuboid(4, 6, -1, 1, 10, id='wall')


@pytest.fixture
def empty_map():
    return ObstacleMap((), (-500.0, 500.0, -500.0, 500.0))


@pytest.fixture
def block_map():
    """Two buildings on a 200 m square."""
    return ObstacleMap((Cuboid(40, 80, 40, 80, 120, id='b1'),
                        Cuboid(120, 160, 100, 180, 200, id='b2')),
                       (0.0, 200.0, 0.0, 200.0))


@pytest.fixture
def block_users():
    return (User('u1', Point3(100.0, 20.0, 0.0), 0.9),
            User('u2', Point3(20.0, 150.0, 0.0), 0.4),
            User('u3', Point3(180.0, 60.0, 0.0), 0.2))


@pytest.fixture
def block_grid():
    return GridSpec(0.0, 200.0, 0.0, 200.0, 20.0, 20.0, 260.0)


@pytest.fixture
def block_mission(block_users):
    return MissionSpec(Point3(60.0, 60.0, 120.0), block_users, i_w=2.0, t_max=Config.T_MAX, v_uav=5.0)


@pytest.fixture
def block_areas(block_users, block_map, budget, block_grid):
    return compute_service_areas(block_users, block_map, budget, block_grid)


@pytest.fixture
def template_path():
    return Config.SCENARIO_TEMPLATE
