import os
import sys
import time
import logging
from dataclasses import replace
from functools import wraps

import click
import pandas as pd
from dotenv import load_dotenv

from config import Config
from coverage_grid import compute_service_areas, coverage_stats, grid_dimensions, union_coverage
from ga import ga_solve
from geometry import merge_cuboids
from routing import advanced_solve, heuristic_solve
from scenario_io import (FOOTPRINT_MERGE_TOLERANCE, build_report, coverage_geojson, export_grid, load_scenario,
                         obstacles_to_dict, read_footprints, save_report, trajectory_geojson, write_json)
from utils.errors import InfeasibleError, PlannerError

logger = logging.getLogger(__name__)

# Load environment variables
load_dotenv()

SOLVERS = ('ga', 'heuristic', 'advanced')


def _interactive() -> bool:
    return sys.stdin is not None and sys.stdin.isatty()


def scenario_options(f):
    """Options shared by every command that reads a scenario, resolved into a Scenario."""
    @click.option('--scenario', 'scenario_path', required=True, type=click.Path(dir_okay=False),
                  help='Scenario JSON file.')
    @click.option('--grid-res', type=float, default=None, help='Grid resolution in metres (overrides the scenario).')
    @click.option('--iw', type=float, default=None, help='Priority exponent I_w (overrides the scenario).')
    @wraps(f)
    def decorated_function(scenario_path, grid_res, iw, **kwargs):
        scenario = load_scenario(scenario_path)
        if grid_res is not None:
            scenario = replace(scenario, grid=replace(scenario.grid, dx=grid_res, dy=grid_res))
        if iw is not None:
            scenario = replace(scenario, mission=replace(scenario.mission, i_w=iw))
        return f(scenario, **kwargs)
    return decorated_function


def _resolve_seed(seed, scenario) -> int:
    if seed is not None:
        return seed
    if scenario.seed is not None:
        return scenario.seed
    if not _interactive():
        raise PlannerError("no seed given: pass --seed or set 'seed' in the scenario")
    logger.warning("No seed given, using 0")
    return 0


def _out_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _solve(name, areas, scenario, iterations, seed, time_budget=None, trace=None):
    """Run one named solver; returns (tour, iterations actually configured)."""
    mission = scenario.mission
    if name == 'ga':
        cfg = replace(scenario.ga, seed=seed, generations=iterations or scenario.ga.generations)
        return ga_solve(areas, mission, cfg, time_budget=time_budget, trace=trace), cfg.generations
    iterations = iterations or scenario.iterations
    solver = heuristic_solve if name == 'heuristic' else advanced_solve
    return solver(areas, mission, iterations, seed, time_budget=time_budget, trace=trace), iterations


@click.group()
@click.option('--log-level', default=Config.LOG_LEVEL, show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
def cli(log_level):
    """UAV line-of-sight trajectory planner."""
    logging.basicConfig(level=log_level.upper(), stream=sys.stderr)


@cli.command()
@scenario_options
@click.option('--out-dir', required=True, type=click.Path(file_okay=False))
def coverage(scenario, out_dir):
    """Compute every user's service area and export the rasters."""
    out_dir = _out_dir(out_dir)
    areas = compute_service_areas(scenario.users, scenario.obstacle_map, scenario.budget, scenario.grid)
    stats = []
    for grid in areas.grids:
        export_grid(grid, os.path.join(out_dir, f"coverage_{grid.user_id}.csv"))
        stats.append(coverage_stats(grid))
        if stats[-1]['valid_cells'] == 0:
            logger.warning("User %s has no valid service cell", grid.user_id)
    m_x, m_y = grid_dimensions(scenario.grid)
    summary = {'grid': {'m_x': m_x, 'm_y': m_y, 'dx': scenario.grid.dx, 'dy': scenario.grid.dy,
                        'altitude': scenario.grid.altitude},
               'users': stats,
               'union_cells': int(union_coverage(areas.grids).sum())}
    write_json(summary, os.path.join(out_dir, 'coverage_summary.json'))
    write_json(coverage_geojson(areas.grids), os.path.join(out_dir, 'coverage.geojson'))
    click.echo(f"Wrote {len(areas.grids)} rasters to {out_dir}")


@cli.command()
@scenario_options
@click.option('--solver', type=click.Choice(SOLVERS), default='advanced', show_default=True)
@click.option('--iterations', type=click.IntRange(min=1), default=None,
              help='Heuristic iterations, or GA generations.')
@click.option('--seed', type=click.IntRange(min=0), default=None)
@click.option('--out-dir', required=True, type=click.Path(file_okay=False))
@click.option('--time-budget', type=click.FloatRange(min=0, min_open=True), default=None,
              help='Stop the solver after this many seconds.')
@click.option('--timings', is_flag=True, help='Record wall time in the report.')
def solve(scenario, solver, iterations, seed, out_dir, time_budget, timings):
    """Run one solver and write its trajectory report and GeoJSON path."""
    seed = _resolve_seed(seed, scenario)
    out_dir = _out_dir(out_dir)
    areas = compute_service_areas(scenario.users, scenario.obstacle_map, scenario.budget, scenario.grid)
    areas.require_satisfiable()

    logger.info("Running %s solver (seed %d)", solver, seed)
    started = time.perf_counter()
    tour, used = _solve(solver, areas, scenario, iterations, seed, time_budget)
    elapsed = time.perf_counter() - started

    report = build_report(tour, scenario, solver, seed, used, wall_time=elapsed if timings else None)
    save_report(report, os.path.join(out_dir, f"report_{solver}.json"))
    write_json(trajectory_geojson(report, scenario), os.path.join(out_dir, f"trajectory_{solver}.geojson"))
    logger.info("%s: objective %.3f, end time %.1f s, feasible=%s", solver, tour.objective, tour.end_time,
                tour.feasible)
    click.echo(f"{solver}: objective={tour.objective:.3f} end_time={tour.end_time:.1f} feasible={tour.feasible}")
    if not tour.feasible:
        raise InfeasibleError(f"{solver}: no tour within T_max={scenario.mission.t_max} s "
                              f"(best end time {tour.end_time:.1f} s)")


@cli.command()
@scenario_options
@click.option('--iterations', type=click.IntRange(min=1), default=None,
              help='Heuristic iterations, or GA generations.')
@click.option('--seed', type=click.IntRange(min=0), default=None)
@click.option('--out-dir', required=True, type=click.Path(file_okay=False))
@click.option('--time-budget', type=click.FloatRange(min=0, min_open=True), default=None,
              help='Same wall-clock budget for every solver.')
@click.option('--timings', is_flag=True, help='Record wall time and elapsed seconds in the outputs.')
def compare(scenario, iterations, seed, out_dir, time_budget, timings):
    """Run all solvers on one scenario and tabulate the results."""
    seed = _resolve_seed(seed, scenario)
    out_dir = _out_dir(out_dir)
    areas = compute_service_areas(scenario.users, scenario.obstacle_map, scenario.budget, scenario.grid)
    areas.require_satisfiable()

    rows, convergence = [], []
    for name in SOLVERS:
        trace = []
        started = time.perf_counter()
        tour, used = _solve(name, areas, scenario, iterations, seed, time_budget, trace)
        elapsed = time.perf_counter() - started
        report = build_report(tour, scenario, name, seed, used, wall_time=elapsed if timings else None)
        save_report(report, os.path.join(out_dir, f"report_{name}.json"))
        rows.append({'solver': name, 'objective': tour.objective, 'end_time': tour.end_time,
                     'feasible': tour.feasible, 'compliant_pairs': report.compliant_pairs,
                     'total_pairs': report.total_pairs, 'wall_time': elapsed if timings else None})
        for point in trace:
            row = {'solver': name, 'index': point.index, 'objective': point.objective, 'end_time': point.end_time}
            if timings:
                row['elapsed'] = point.elapsed
            convergence.append(row)
        logger.info("%s: objective %.3f, end time %.1f s", name, tour.objective, tour.end_time)

    table = pd.DataFrame(rows, columns=['solver', 'objective', 'end_time', 'feasible', 'compliant_pairs',
                                        'total_pairs', 'wall_time'])
    table.to_csv(os.path.join(out_dir, 'comparison.csv'), index=False)
    columns = ['solver', 'index', 'objective', 'end_time'] + (['elapsed'] if timings else [])
    pd.DataFrame(convergence, columns=columns).to_csv(os.path.join(out_dir, 'convergence.csv'), index=False)
    click.echo(table.drop(columns=['wall_time']).to_string(index=False))
    if not table['feasible'].any():
        raise InfeasibleError(f"no solver found a tour within T_max={scenario.mission.t_max} s")


@cli.command()
@scenario_options
def validate(scenario):
    """Check a scenario and that every user has at least one valid service cell."""
    areas = compute_service_areas(scenario.users, scenario.obstacle_map, scenario.budget, scenario.grid)
    areas.require_satisfiable()
    m_x, m_y = grid_dimensions(scenario.grid)
    click.echo(f"OK: {len(scenario.users)} users, {len(scenario.obstacle_map)} obstacles, "
               f"grid {m_x} x {m_y} at {scenario.grid.altitude:g} m")
    for grid in areas.grids:
        click.echo(f"  {grid.user_id}: {coverage_stats(grid)['valid_cells']} valid cells")


@cli.command()
@click.option('--input', 'path_in', required=True, type=click.Path(dir_okay=False), help='Footprint CSV table.')
@click.option('--output', 'path_out', required=True, type=click.Path(dir_okay=False),
              help='JSON file receiving bounds and merged obstacles.')
@click.option('--default-height', type=float, default=None, help='Height for rows without one.')
def convert(path_in, path_out, default_height):
    """Convert building footprints into merged cuboid obstacles."""
    footprints = read_footprints(path_in, default_height)
    obstacle_map = merge_cuboids(footprints, FOOTPRINT_MERGE_TOLERANCE)
    write_json(obstacles_to_dict(obstacle_map), path_out)
    click.echo(f"Merged {len(footprints)} footprints into {len(obstacle_map)} cuboids; wrote {path_out}")


def run(argv=None) -> int:
    """
    Entry point. Returns 0 on success, 2 when no tour meets T_max and 1 on
    any other error.
    """
    try:
        cli.main(args=argv, prog_name='planner', standalone_mode=False)
    except InfeasibleError as e:
        click.echo(f"infeasible: {e}", err=True)
        return 2
    except (PlannerError, ValueError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(run())
