"""
Runs one configured experiment and writes its artifacts:

    <out>/summary.json     criteria with pass/fail, metrics, table names
    <out>/tables/*.csv     one file per result table
    <out>/sweeps.jsonl     one line per recorded sweep
    <out>/fields/*         solution fields (header + binary)

Nothing timing-dependent is written, so reruns with the same config and
seed give identical files.
"""
import csv
import json
import logging
import math
import os
from typing import Callable, Dict, List, Optional

import numpy as np

from core import field_io
from core.exceptions import ConfigError, WorkbenchError
from core.halfspace_grid import HalfSpaceGrid
from core.resource_utils import get_fixture
from models import (
    ClosedFormProfile,
    GridField,
    ProfileKind,
    Rank,
    RoughDomain,
    StokesProblem,
    StokesSolution,
)
from schemas import Criterion, ExperimentConfig, RunOutcome, RunSummary, SobolevIndex, Subcommand, SweepRecord
from services import (
    chart_service,
    fixtures_service,
    halfspace_service,
    neumann_service,
    norm_service,
    rough_stokes_service,
    sharpness_service,
)

logger = logging.getLogger(__name__)

DEFAULT_FAMILY = [0.02, 0.05, 0.1]
DIRECT_P = 3.0


# Helpers
def _grid(config: ExperimentConfig, nodes: Optional[int] = None) -> HalfSpaceGrid:
    spec = config.grid
    return HalfSpaceGrid(
        nx=nodes or spec.nx,
        nz=nodes or spec.nz,
        length_x=spec.length_x,
        length_z=spec.length_z,
    )


def _sizes(config: ExperimentConfig) -> List[int]:
    return list(config.refinements) or [config.grid.nx]


def _criterion(name: str, value: Optional[float], tolerances: Dict[str, float]) -> Criterion:
    tolerance = tolerances[name]
    passed = value is not None and math.isfinite(value) and value <= tolerance
    return Criterion(name=name, value=value, tolerance=tolerance, passed=passed)


def _relative_l2(grid: HalfSpaceGrid, error: np.ndarray, reference: np.ndarray) -> float:
    axes = tuple(range(error.ndim - 2))
    err = np.sum(error ** 2, axis=axes) if axes else error ** 2
    ref = np.sum(reference ** 2, axis=axes) if axes else reference ** 2
    denominator = float(grid.integrate(ref, physical_only=True))
    return float(np.sqrt(grid.integrate(err, physical_only=True) / max(denominator, 1e-300)))


def _sweep_lines(label: str, history: List[SweepRecord]) -> List[Dict]:
    return [dict(record.model_dump(), run=label) for record in history]


def _domain(config: ExperimentConfig, grid: HalfSpaceGrid, lipschitz: Optional[float] = None) -> RoughDomain:
    spec = config.domain
    if config.inputs is not None and config.inputs.atlas and lipschitz is None:
        domain = chart_service.domain_from_atlas_file(config.inputs.atlas, grid)
    else:
        K = spec.lipschitz if lipschitz is None else lipschitz
        boundary = chart_service.cosine_boundary(K, grid, spec.frequency)
        domain = chart_service.build_rough_domain(boundary, grid, spec.charts, spec.overlap)
    index = config.indices[0]
    atlas = chart_service.certify_atlas(domain.atlas, index.s, index.p)
    return domain.model_copy(update={"atlas": atlas})


def _input_field(config: ExperimentConfig, grid: HalfSpaceGrid, name: str, rank: Rank) -> Optional[GridField]:
    if config.inputs is None or name not in config.inputs.fields:
        return None
    field = field_io.read_field(config.inputs.fields[name])
    if field.rank is not rank:
        raise ConfigError(f"input field '{name}' must be a {rank.value} field, got {field.rank.value}")
    if tuple(field.nodes) != grid.shape:
        raise ConfigError(f"input field '{name}' has nodes {tuple(field.nodes)}, the grid has {grid.shape}")
    return field


def _residual(solution: StokesSolution) -> float:
    return max(solution.residuals.get(key, 0.0) for key in ("momentum", "divergence", "normal", "slip"))


def _estimate_rows(label: str, problem: StokesProblem, solution: StokesSolution, indices: List[SobolevIndex]) -> List[Dict]:
    rows = []
    for index in indices:
        if index.s not in (1.0, 2.0):
            logger.info(f"Skipping estimate at s={index.s}: sides are assembled for s in {{1, 2}}.")
            continue
        report = rough_stokes_service.verify_estimate(problem, solution, index)
        rows.append({
            "run": label, "s": index.s, "p": index.p, "lhs": report.lhs, "rhs": report.rhs,
            "ratio": report.ratio, "degenerate": report.degenerate,
        })
    return rows


# Handlers
def _halfspace_verify(config: ExperimentConfig, threads: Optional[int], out_dir: str) -> RunOutcome:
    frictions = config.domain.friction if config.domain is not None else [0.0]
    sizes = _sizes(config)
    rows, finest_errors, residuals = [], [], []
    errors_by_size: Dict[int, float] = {}
    for n in sizes:
        grid = _grid(config, n)
        for name, builder in (("parity", fixtures_service.halfspace_parity), ("general", fixtures_service.halfspace_general)):
            for friction in frictions:
                problem, exact = builder(grid, friction)
                solution = halfspace_service.solve_halfspace(problem)
                error = _relative_l2(grid, solution.u.values - exact.u, exact.u)
                residual = max(solution.residual_interior, solution.residual_bc)
                rows.append({
                    "nodes": n, "fixture": name, "friction": friction, "velocity_error": error,
                    "residual_interior": solution.residual_interior, "residual_bc": solution.residual_bc,
                    "net_force": solution.net_force_defect,
                })
                residuals.append(residual)
                errors_by_size[n] = max(errors_by_size.get(n, 0.0), error)
                if n == sizes[-1]:
                    finest_errors.append(error)
                    if name == "parity" and friction == frictions[0]:
                        field_io.write_field(solution.u, os.path.join(out_dir, "fields", "halfspace_u"))

    tolerances = config.tolerances
    criteria = [
        _criterion("velocity_error", max(finest_errors), tolerances),
        _criterion("residual", max(residuals), tolerances),
    ]
    metrics = {f"velocity_error_{n}": e for n, e in errors_by_size.items()}
    if len(sizes) >= 2:
        ratio = errors_by_size[sizes[-1]] / max(errors_by_size[sizes[-2]], 1e-300)
        metrics["refinement_ratio"] = ratio
        if "refinement_ratio" in tolerances:
            criteria.append(_criterion("refinement_ratio", ratio, tolerances))
    elif "refinement_ratio" in tolerances:
        criteria.append(Criterion(name="refinement_ratio", value=None, tolerance=tolerances["refinement_ratio"], passed=False))
    return RunOutcome(criteria=criteria, metrics=metrics, tables={"halfspace": rows})


def _rough_solve(config: ExperimentConfig, threads: Optional[int], out_dir: str) -> RunOutcome:
    grid = _grid(config)
    domain = _domain(config, grid)
    tolerances = config.tolerances
    tol = tolerances.get("increment", 1e-8)
    F = _input_field(config, grid, "F", Rank.TENSOR)
    if F is None:
        F = fixtures_service.rough_strip_data(domain)

    rows, estimates, sweeps = [], [], []
    worst_residual, worst_factor, most_sweeps = 0.0, 0.0, 0
    for friction in config.domain.friction:
        label = f"alpha={friction:g}"
        problem = StokesProblem(domain=domain, F=F, alpha=np.full(grid.nx, friction), index=config.indices[0])
        solution = rough_stokes_service.picard_solve(problem, tol, config.max_sweeps, threads)
        factor = max(solution.factors) if solution.factors else 0.0
        rows.append({
            "friction": friction, "sweeps": solution.sweeps, "converged": solution.converged,
            "contraction": factor, "momentum": solution.residuals["momentum"],
            "divergence": solution.residuals["divergence"],
            "normal": solution.residuals["normal"], "slip": solution.residuals["slip"],
            "delta": domain.atlas.delta,
        })
        estimates += _estimate_rows(label, problem, solution, config.indices)
        sweeps += _sweep_lines(label, solution.history)
        worst_residual = max(worst_residual, _residual(solution))
        worst_factor = max(worst_factor, factor)
        most_sweeps = max(most_sweeps, solution.sweeps)
        if friction == config.domain.friction[0]:
            field_io.write_field(solution.u, os.path.join(out_dir, "fields", "rough_u"))
            field_io.write_field(solution.pi, os.path.join(out_dir, "fields", "rough_pi"))

    criteria = [
        _criterion("residual", worst_residual, tolerances),
        _criterion("contraction", worst_factor, tolerances),
    ]
    if "sweeps" in tolerances:
        criteria.append(_criterion("sweeps", float(most_sweeps), tolerances))
    metrics = {
        "delta": domain.atlas.delta or 0.0,
        "lipschitz": domain.boundary.lipschitz,
        "chart_deviation": rough_stokes_service.chart_deviation(domain),
    }
    tables = {"rough": rows, "estimates": estimates}

    alpha = np.full(grid.nx, config.domain.friction[0])
    if "spread" in tolerances:
        spread = rough_stokes_service.estimate_spread(
            domain, alpha, config.indices[0], config.samples, config.seed, tol, config.max_sweeps, threads
        )
        metrics.update({"spread_min": spread.min_ratio or 0.0, "spread_max": spread.max_ratio or 0.0})
        criteria.append(_criterion("spread", spread.spread, tolerances))

    family = []
    for K in config.domain.lipschitz_family:
        member = _domain(config, grid, K)
        problem = StokesProblem(domain=member, F=fixtures_service.rough_strip_data(member), alpha=alpha, index=config.indices[0])
        solution = rough_stokes_service.picard_solve(problem, tol, config.max_sweeps, threads)
        report = solution.estimate
        family.append({
            "lipschitz": K, "sweeps": solution.sweeps, "converged": solution.converged,
            "ratio": report.ratio if report is not None else None, "delta": member.atlas.delta,
        })
    if family:
        tables["family"] = family
    return RunOutcome(criteria=criteria, metrics=metrics, tables=tables, sweeps=sweeps)


def _nondiv_solve(config: ExperimentConfig, threads: Optional[int], out_dir: str) -> RunOutcome:
    grid = _grid(config)
    domain = _domain(config, grid)
    tolerances = config.tolerances
    tol = tolerances.get("increment", 1e-8)
    F, f, G = fixtures_service.rough_strip_force(domain)

    rows, sweeps = [], []
    worst_gap, worst_residual = 0.0, 0.0
    for friction in config.domain.friction:
        alpha = np.full(grid.nx, friction)
        label = f"alpha={friction:g}"
        divergence_form = rough_stokes_service.picard_solve(
            StokesProblem(domain=domain, F=F, alpha=alpha), tol, config.max_sweeps, threads
        )
        force_form = rough_stokes_service.nondivergence_solve(
            StokesProblem(domain=domain, f=f, G_tangential=G, alpha=alpha, index=SobolevIndex(s=2.0, p=config.indices[0].p)),
            tol,
            config.max_sweeps,
            threads,
        )
        gap = _relative_l2(grid, force_form.u.values - divergence_form.u.values, divergence_form.u.values)
        rows.append({
            "friction": friction, "consistency": gap, "sweeps_divergence_form": divergence_form.sweeps,
            "sweeps_force_form": force_form.sweeps, "residual": _residual(force_form),
            "ratio": force_form.estimate.ratio if force_form.estimate is not None else None,
        })
        sweeps += _sweep_lines(f"{label}/divergence-form", divergence_form.history)
        sweeps += _sweep_lines(f"{label}/force-form", force_form.history)
        worst_gap = max(worst_gap, gap)
        worst_residual = max(worst_residual, _residual(force_form))

    criteria = [
        _criterion("consistency", worst_gap, tolerances),
        _criterion("residual", worst_residual, tolerances),
    ]
    return RunOutcome(criteria=criteria, metrics={"lipschitz": domain.boundary.lipschitz}, tables={"nondiv": rows}, sweeps=sweeps)


def _neumann_verify(config: ExperimentConfig, threads: Optional[int], out_dir: str) -> RunOutcome:
    tolerances = config.tolerances
    tol = tolerances.get("increment", 1e-8)
    sizes = _sizes(config)
    rows, sweeps = [], []
    worst_error, worst_residual, most_sweeps = 0.0, 0.0, 0
    for n in sizes:
        grid = _grid(config, n)
        f, chi, exact = fixtures_service.neumann_cosine(grid)
        flat = neumann_service.halfspace_neumann(grid, f=f, chi=chi, check_padding=True)
        flat_grad = np.array([flat.u.dx().values, flat.u.dz().values])
        flat_error = _relative_l2(grid, flat.u.values - exact.u, exact.u) + _relative_l2(grid, flat_grad - exact.grad, exact.grad)
        flat_residual = max(flat.residual_interior, flat.residual_bc)
        rows.append({"nodes": n, "domain": "half-space", "w12_error": flat_error, "residual": flat_residual, "sweeps": 1})

        domain = _domain(config, grid)
        problem, exact_rough = fixtures_service.rough_neumann_manufactured(domain)
        rough = neumann_service.solve_neumann_rough(problem, tol, config.max_sweeps, threads)
        rough_error = (
            _relative_l2(grid, rough.u.values - exact_rough.u, exact_rough.u)
            + _relative_l2(grid, rough.grad - exact_rough.grad, exact_rough.grad)
        )
        rough_residual = max(rough.residuals["interior"], rough.residuals["normal"])
        rows.append({
            "nodes": n, "domain": f"K={domain.boundary.lipschitz:g}", "w12_error": rough_error,
            "residual": rough_residual, "sweeps": rough.sweeps,
        })
        sweeps += _sweep_lines(f"neumann/{n}", rough.history)
        if n == sizes[-1]:
            worst_error = max(flat_error, rough_error)
        worst_residual = max(worst_residual, flat_residual, rough_residual)
        most_sweeps = max(most_sweeps, rough.sweeps)

    criteria = [
        _criterion("error", worst_error, tolerances),
        _criterion("residual", worst_residual, tolerances),
    ]
    if "sweeps" in tolerances:
        criteria.append(_criterion("sweeps", float(most_sweeps), tolerances))
    return RunOutcome(criteria=criteria, tables={"neumann": rows}, sweeps=sweeps)


def _sharpness(config: ExperimentConfig, threads: Optional[int], out_dir: str) -> RunOutcome:
    spec = config.sharpness
    angles = [v * math.pi for v in spec.theta_over_pi]
    rows = sharpness_service.threshold_table(angles, spec.p, spec.cells, spec.radii)

    deviations = []
    for row in rows:
        gap = abs(row.measured_exponent - row.analytic_exponent)
        deviations.append(gap if row.analytic_exponent == 0.0 else gap / abs(row.analytic_exponent))
    mismatches = sum(1 for row in rows if row.bounded != row.predicted_bounded)
    criteria = [_criterion("exponent", max(deviations), config.tolerances)]
    if "threshold_mismatches" in config.tolerances:
        criteria.append(_criterion("threshold_mismatches", float(mismatches), config.tolerances))

    table = [row.model_dump() for row in rows]
    return RunOutcome(criteria=criteria, metrics={"threshold_mismatches": float(mismatches)}, tables={"sharpness": table})


def _norms(config: ExperimentConfig, threads: Optional[int], out_dir: str) -> RunOutcome:
    params = get_fixture("norms")
    sizes = list(config.refinements) or [int(params.get("nodes", 128))]
    mode = int(params.get("mode", 1))
    rows, deviations = [], []
    for n in sizes:
        x = 2.0 * math.pi * np.arange(n) / n
        field = GridField(extent=(2.0 * math.pi,), nodes=(n,), values=np.sin(mode * x))
        gagliardo = norm_service.fractional_seminorm(field, 0.5, 2.0)
        direct = norm_service.fractional_seminorm(field, 0.5, DIRECT_P, threads)
        fourier = norm_service.fourier_seminorm(field, 0.5)
        ratio = gagliardo.value / fourier
        deviations.append(abs(ratio - 1.0))
        rows.append({"nodes": n, "gagliardo": gagliardo.value, "fourier": fourier, "ratio": ratio, "calibration": gagliardo.calibration,
                     "gagliardo_direct": direct.value, "direct_p": DIRECT_P})

    family = (config.domain.lipschitz_family if config.domain is not None else []) or DEFAULT_FAMILY
    p = config.indices[0].p
    s = 1.0 - 1.0 / p
    unit = chart_service.chart_from_profile(ClosedFormProfile(kind=ProfileKind.BUMP, params={"amplitude": 1.0, "width": 0.5}), 1.0, 1.0)
    bounds, multiplier_rows = [], []
    for K in family:
        profile = ClosedFormProfile(kind=ProfileKind.BUMP, params={"amplitude": K / unit.lipschitz, "width": 0.5})
        chart = chart_service.chart_from_profile(profile, 1.0, 1.0)
        report = norm_service.multiplier_bound(chart, s, p)
        bounds.append(report.value)
        multiplier_rows.append({"lipschitz": chart.lipschitz, "bound": report.value, "regime": report.regime, "certified": report.certified})
    slope, intercept = np.polyfit(np.asarray(family, dtype=float), np.asarray(bounds), 1)
    fit = slope * np.asarray(family) + intercept
    linearity = float(np.max(np.abs(np.asarray(bounds) - fit)) / max(float(np.max(np.abs(bounds))), 1e-300))

    criteria = [
        _criterion("fourier_ratio", max(deviations), config.tolerances),
        _criterion("multiplier_linearity", linearity, config.tolerances),
    ]
    metrics = {"multiplier_slope": float(slope), "multiplier_intercept": float(intercept)}
    return RunOutcome(criteria=criteria, metrics=metrics, tables={"gagliardo": rows, "multipliers": multiplier_rows})


HANDLERS: Dict[Subcommand, Callable[[ExperimentConfig, Optional[int], str], RunOutcome]] = {
    Subcommand.HALFSPACE_VERIFY: _halfspace_verify,
    Subcommand.ROUGH_SOLVE: _rough_solve,
    Subcommand.NONDIV_SOLVE: _nondiv_solve,
    Subcommand.NEUMANN_VERIFY: _neumann_verify,
    Subcommand.SHARPNESS: _sharpness,
    Subcommand.NORMS: _norms,
}


# Artifacts
def _clean(value):
    """JSON/CSV-safe scalars: numpy types unwrapped, non-finite floats as None."""
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _write_table(path: str, rows: List[Dict]) -> None:
    columns: List[str] = []
    for row in rows:
        columns += [key for key in row if key not in columns]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _clean(value) for key, value in row.items()})


def write_artifacts(out_dir: str, summary: RunSummary, outcome: RunOutcome) -> None:
    os.makedirs(os.path.join(out_dir, "tables"), exist_ok=True)
    for name, rows in outcome.tables.items():
        _write_table(os.path.join(out_dir, "tables", f"{name}.csv"), rows)
    with open(os.path.join(out_dir, "sweeps.jsonl"), "w") as f:
        for line in outcome.sweeps:
            f.write(json.dumps({k: _clean(v) for k, v in line.items()}, sort_keys=True) + "\n")
    payload = json.loads(summary.model_dump_json())
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def run(config: ExperimentConfig, out_dir: str, threads: Optional[int] = None) -> int:
    """
    Executes the configured subcommand. Returns 0 when every configured
    tolerance is met, 1 when a criterion fails or a solver stage raises.
    """
    logger.info(f"Running {config.subcommand.value} with seed {config.seed} into {out_dir}")
    notes: List[str] = []
    try:
        outcome = HANDLERS[config.subcommand](config, threads, out_dir)
    except WorkbenchError as e:
        logger.error(f"{config.subcommand.value} failed: {type(e).__name__}: {e}")
        notes.append(f"{type(e).__name__}: {e}")
        criteria = [
            Criterion(name=name, value=None, tolerance=tol, passed=False) for name, tol in sorted(config.tolerances.items())
        ]
        outcome = RunOutcome(criteria=criteria)

    passed = all(c.passed for c in outcome.criteria)
    metrics = {k: v for k, v in ((k, _clean(v)) for k, v in outcome.metrics.items()) if v is not None}
    summary = RunSummary(
        subcommand=config.subcommand,
        seed=config.seed,
        passed=passed,
        criteria=outcome.criteria,
        metrics=metrics,
        tables=sorted(outcome.tables),
        notes=notes,
    )
    write_artifacts(out_dir, summary, outcome)

    for criterion in outcome.criteria:
        status = "pass" if criterion.passed else "FAIL"
        logger.info(f"  {criterion.name}: {criterion.value} (tol {criterion.tolerance:g}) {status}")
    if not passed:
        failing = ", ".join(c.name for c in outcome.criteria if not c.passed)
        logger.error(f"{config.subcommand.value}: failing criteria: {failing}")
        return 1
    return 0
