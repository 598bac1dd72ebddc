import os
import json
import logging
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

SETTINGS_FILE = os.path.join(os.path.dirname(__file__), 'planner_settings.json')


def load_planner_settings():
    """
    Load setting overrides from the PLANNER_SETTINGS JSON environment variable
    or from a local planner_settings.json file.
    Returns None when neither is present or parsable; individual env vars
    are used in that case.
    """
    raw = os.environ.get('PLANNER_SETTINGS', '')
    if raw:
        try:
            data = json.loads(raw)
            if isinstance(data, dict):
                logger.debug("Loaded PLANNER_SETTINGS from environment, keys: %s", sorted(data))
                return data
            logger.warning("PLANNER_SETTINGS is not a JSON object, ignoring it")
        except (json.JSONDecodeError, TypeError) as e:
            logger.warning("Failed to parse PLANNER_SETTINGS as JSON: %s", e)
        return None

    if os.path.exists(SETTINGS_FILE):
        try:
            with open(SETTINGS_FILE, 'r', encoding='utf-8') as f:
                data = json.load(f)
            if isinstance(data, dict):
                logger.debug("Loaded settings from %s", SETTINGS_FILE)
                return data
        except (json.JSONDecodeError, IOError) as e:
            logger.warning("Failed to load %s: %s", SETTINGS_FILE, e)
    return None


_overrides = load_planner_settings() or {}


def _setting(name, default, cast=float):
    """Resolve a setting: JSON overrides first, then env var, then default."""
    value = _overrides.get(name, os.environ.get(name))
    if value is None or value == '':
        return default
    try:
        return cast(value)
    except (TypeError, ValueError):
        logger.warning("Ignoring invalid value for %s: %r", name, value)
        return default


class Config:
    # Simulation defaults. Altitude, speed, T_max and the BER thresholds are
    # the published mission values; D_REF is a local calibration choice.
    UAV_ALTITUDE = _setting('UAV_ALTITUDE', 260.0)
    UAV_SPEED = _setting('UAV_SPEED', 5.0)
    T_MAX = _setting('T_MAX', 2100.0)
    BER_LOOSE = _setting('BER_LOOSE', 1e-3)
    BER_STRICT = _setting('BER_STRICT', 1e-6)
    D_REF = _setting('D_REF', 500.0)
    GRID_RESOLUTION = _setting('GRID_RESOLUTION', 10.0)
    ALTITUDE_CLEARANCE = _setting('ALTITUDE_CLEARANCE', 10.0)
    I_W = _setting('I_W', 2.0)

    # Solvers
    HEURISTIC_ITERATIONS = _setting('HEURISTIC_ITERATIONS', 200, int)
    EXACT_ORDER_LIMIT = _setting('EXACT_ORDER_LIMIT', 16, int)
    LOCAL_SEARCH_RESTARTS = _setting('LOCAL_SEARCH_RESTARTS', 20, int)
    GA_POPULATION = _setting('GA_POPULATION', 100, int)
    GA_GENERATIONS = _setting('GA_GENERATIONS', 500, int)
    GA_CROSSOVER_RATE = _setting('GA_CROSSOVER_RATE', 0.9)
    GA_MUTATION_RATE = _setting('GA_MUTATION_RATE', 0.1)
    GA_LAMBDA = _setting('GA_LAMBDA', 1e3)  # per second over T_max
    GA_MU = _setting('GA_MU', 1e6)  # per user off its service area
    GA_TOURNAMENT_SIZE = _setting('GA_TOURNAMENT_SIZE', 3, int)
    GA_ELITE = _setting('GA_ELITE', 1, int)

    # Oracles
    ORACLE_STEP = _setting('ORACLE_STEP', 0.05)
    ORACLE_ENUMERATION_CAP = _setting('ORACLE_ENUMERATION_CAP', 8, int)

    LOG_LEVEL = _setting('LOG_LEVEL', 'INFO', str).upper()

    # Scenario template shipped with the repo
    SCENARIO_TEMPLATE = os.path.join(os.path.dirname(__file__), 'scenario_template.json')
