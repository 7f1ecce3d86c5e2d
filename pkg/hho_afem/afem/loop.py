from __future__ import annotations

import csv
import time
from pathlib import Path
from typing import List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from hho_afem import error, util
from hho_afem.abstract.hho_object import HHOObject
from hho_afem.afem.benchmarks import BenchmarkConfig
from hho_afem.afem.marking import dorfler_mark
from hho_afem.fem import settings
from hho_afem.fem.estimate import (
    BoundReport,
    StressField,
    discrete_stress,
    dual_energy,
    dual_energy_twowell,
    equilibrium_residual,
    grad_error,
    l2_error,
    leb_constant,
    lower_energy_bound,
    lp_norm,
    microstructure_fractions,
    normal_jumps,
    oscillation,
    postprocess_conforming,
    refinement_indicators,
    rhs_estimate,
    stress_error,
)
from hho_afem.fem.hho import HHOFunction, HHOSpace, discrete_energy, reconstruct_gradient
from hho_afem.fem.mesh import refine_nvb, uniform_refine
from hho_afem.fem.solve import initial_guess, minimize, prolongate


class ConvergenceRecord(HHOObject):
    """One row of the convergence history.

    Error entries are squared norms: ``‖σ − σ_h‖²_{L^{p'}}``,
    ``‖∇u − R u_h‖²_{L^p}`` and ``‖u − u_T‖²_{L²}``. A level whose solver or
    estimator did not converge has ``converged`` false and no estimator entries.
    ``phase_counts`` holds the numbers of cells with volume fraction 0, strictly
    between 0 and 1, and 1; it is set for optimal design only.
    """

    _object_type = "convergence_record"
    _fields = settings.CSV_COLUMNS + (
        "converged",
        "marked",
        "equilibrium",
        "max_jump",
        "phase_counts",
    )
    _required_fields = ("level", "ndof")

    def csv_row(self) -> List[str]:
        return [_format_cell(self.get(column)) for column in settings.CSV_COLUMNS]


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def estimate_level(
    config: BenchmarkConfig, space: HHOSpace, u_h: HHOFunction
) -> Tuple[BoundReport, StressField]:
    """Evaluates energies, bounds, estimator and indicators for one level."""
    density = config.density
    params = density.params
    mesh = space.mesh
    k = space.k
    q = params.p_conjugate

    stress = discrete_stress(space, density, u_h)
    energy = discrete_energy(space, density, config.f, u_h, fidelity=config.fidelity)
    if config.fidelity is not None:
        dual = dual_energy_twowell(
            density,
            stress,
            g=config.fidelity.g,
            u_D=config.dirichlet,
            f=config.f,
            alpha=config.fidelity.alpha,
        )
    else:
        dual = dual_energy(density, stress)

    osc = oscillation(config.f, mesh, k, exponent=q)
    energy_at_zero = None
    if config.fidelity is not None:
        energy_at_zero = float(density.W(np.zeros(2))) * mesh.domain_area + (
            config.fidelity.alpha * lp_norm(mesh, config.fidelity.g, 2.0) ** 2
        )
    constant = leb_constant(
        density,
        f_norm=lp_norm(mesh, config.f, q),
        area=mesh.domain_area,
        poincare_constant=config.poincare_constant,
        energy_at_zero=energy_at_zero,
    )
    leb = lower_energy_bound(dual, constant, osc)

    if config.osc_h_power == 1.0:
        osc_rhs = osc
    else:
        osc_rhs = oscillation(config.f, mesh, k, exponent=q, h_power=config.osc_h_power)
    extra = 0.0
    if config.fidelity is not None:
        extra = oscillation(config.fidelity.g, mesh, k, exponent=2.0)

    postprocess = postprocess_conforming(space, u_h, p=params.p, dirichlet=config.dirichlet)
    rhs = rhs_estimate(
        energy=energy,
        dual=dual,
        osc=osc_rhs,
        postprocess=postprocess,
        params=params,
        extra=extra,
    )
    eta = refinement_indicators(space, density, config.f, u_h, stress, postprocess)

    jumps = normal_jumps(stress)
    scale = 1.0 + float(np.max(np.abs(stress.values())))
    report = BoundReport(
        energy=energy,
        dual_energy=dual,
        oscillation=osc,
        leb_constant=constant,
        leb=leb,
        rhs=rhs.value,
        gap=energy - dual,
        rhs_terms=rhs.terms,
        indicators=eta,
        equilibrium_residual=equilibrium_residual(
            stress, config.f, p_conjugate=q, u_h=u_h, fidelity=config.fidelity
        ),
        max_normal_jump=(float(jumps.max()) if len(jumps) else 0.0) / scale,
    )
    return report, stress


def _errors(config: BenchmarkConfig, space: HHOSpace, u_h: HHOFunction, stress) -> dict:
    params = config.density.params
    errors = {"err_stress": None, "err_grad": None, "err_l2": None}
    if config.sigma_exact is not None:
        errors["err_stress"] = stress_error(stress, config.sigma_exact, params.p_conjugate) ** 2
    if config.grad_exact is not None:
        gradient = reconstruct_gradient(space, u_h)
        errors["err_grad"] = grad_error(gradient, config.grad_exact, params.p) ** 2
    if config.u_exact is not None:
        errors["err_l2"] = l2_error(space, u_h, config.u_exact) ** 2
    return errors


def run_afem(
    config: BenchmarkConfig, *, out: Optional[Union[str, Path]] = None
) -> List[ConvergenceRecord]:
    """
    Runs SOLVE → ESTIMATE → MARK → REFINE until the degrees of freedom
    exceed ``config.max_ndof``.

    The first level always runs. ``θ = 1`` refines uniformly. A level whose
    solver or conjugate evaluation does not converge is recorded without
    estimates and ends the run.

    Parameters
    ----------
    config
        The benchmark configuration.
    out
        CSV path, rewritten after every level so an aborted run leaves the
        completed rows.

    Returns
    -------
        One record per executed level.
    """
    mesh = config.mesh
    records: List[ConvergenceRecord] = []
    u_previous: Optional[HHOFunction] = None
    level = 0

    while True:
        start = time.perf_counter()
        space = HHOSpace(
            mesh,
            k=config.k,
            quadrature_degree=config.quadrature_degree,
            dirichlet=config.dirichlet,
        )
        if records and space.ndof > config.max_ndof:
            break

        init = initial_guess(space) if u_previous is None else prolongate(u_previous, space)
        u_h, report = minimize(
            space, config.density, config.f, init, config.solver, fidelity=config.fidelity
        )

        if not report.converged:
            record = ConvergenceRecord(
                level=level,
                ndof=space.ndof,
                Eh=report.energy,
                iters=report.iterations,
                seconds=time.perf_counter() - start,
                converged=False,
            )
            records.append(record)
            util.log_info(
                "Solver failed, aborting run",
                level=level,
                ndof=space.ndof,
                gradient_norm=report.gradient_norm,
            )
            break

        try:
            bounds, stress = estimate_level(config, space, u_h)
        except error.ConvergenceError as exc:
            records.append(
                ConvergenceRecord(
                    level=level,
                    ndof=space.ndof,
                    Eh=report.energy,
                    iters=report.iterations,
                    seconds=time.perf_counter() - start,
                    converged=False,
                )
            )
            util.log_info(
                "Estimation failed, aborting run",
                level=level,
                ndof=space.ndof,
                reason=str(exc),
                max_residual=exc.details.get("max_residual"),
            )
            break

        eta = bounds.indicators
        record = ConvergenceRecord(
            level=level,
            ndof=space.ndof,
            Eh=bounds.energy,
            Estar=bounds.dual_energy,
            LEB=bounds.leb,
            RHS=bounds.rhs,
            gap=bounds.gap,
            osc=bounds.oscillation,
            eta_sum=float(np.sum(eta)),
            iters=report.iterations,
            converged=True,
            equilibrium=bounds.equilibrium_residual,
            max_jump=bounds.max_normal_jump,
            **_errors(config, space, u_h, stress),
        )
        if hasattr(config.density, "volume_fraction"):
            fractions = microstructure_fractions(space, config.density, u_h)
            mixed = int(np.count_nonzero((fractions > 0.0) & (fractions < 1.0)))
            record.phase_counts = (
                int(np.count_nonzero(fractions == 0.0)),
                mixed,
                int(np.count_nonzero(fractions == 1.0)),
            )

        if config.theta == 1.0:
            marked = np.arange(mesh.n_cells)
            next_mesh = uniform_refine(mesh)
        else:
            marked = dorfler_mark(eta, config.theta)
            next_mesh = refine_nvb(mesh, marked) if len(marked) else None

        record.marked = len(marked)
        record.seconds = time.perf_counter() - start
        records.append(record)
        util.log_info(
            "AFEM level",
            level=level,
            ndof=space.ndof,
            Eh=record.Eh,
            LEB=record.LEB,
            RHS=record.RHS,
            marked=record.marked,
        )
        if out is not None:
            write_csv(records, out)

        if next_mesh is None:
            break
        mesh = next_mesh
        u_previous = u_h
        level += 1

    if out is not None:
        write_csv(records, out)
    return records


def write_csv(records: List[ConvergenceRecord], path: Union[str, Path, TextIO]) -> None:
    """Writes the convergence history; missing values become empty fields."""
    if hasattr(path, "write"):
        _write_rows(records, path)
        return

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        _write_rows(records, handle)


def _write_rows(records: List[ConvergenceRecord], handle: TextIO) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(settings.CSV_COLUMNS)
    for record in records:
        writer.writerow(record.csv_row())


def read_history(path: Union[str, Path]) -> pd.DataFrame:
    """Reads a convergence CSV; empty fields become NaN."""
    history = pd.read_csv(path)
    missing = [column for column in settings.CSV_COLUMNS if column not in history.columns]
    if missing:
        raise error.ConfigurationError(
            f"{path} is not a convergence history", details={"missing": missing}
        )
    return history.sort_values("level", kind="stable").reset_index(drop=True)


def convergence_rates(
    history: pd.DataFrame,
    *,
    columns: Sequence[str] = ("RHS", "gap", "err_stress", "err_grad", "eta_sum"),
    last: Optional[int] = 3,
    reference_energy: Optional[float] = None,
) -> pd.DataFrame:
    """
    Least-squares slopes of each quantity against ndof in log-log scale.

    Parameters
    ----------
    history
        Convergence history as returned by ``read_history``.
    columns
        Quantities to fit; columns without positive values are skipped.
    last
        Number of final levels used in the fit; ``None`` uses all.
    reference_energy
        Adds the row ``E-LEB`` fitted to ``reference_energy − LEB``.

    Returns
    -------
        One row per quantity with its slope and the rate ``−slope``.
    """
    frame = history if last is None else history.tail(last)
    series = {column: frame[column] for column in columns if column in frame.columns}
    if reference_energy is not None:
        series["E-LEB"] = reference_energy - frame["LEB"]

    rows = []
    for name, values in series.items():
        keep = values.notna() & (values > 0.0) & frame["ndof"].notna()
        if keep.sum() < 2:
            continue
        slope = util.least_squares_slope(frame["ndof"][keep], values[keep])
        rows.append({"quantity": name, "levels": int(keep.sum()), "slope": slope, "rate": -slope})
    return pd.DataFrame(rows, columns=["quantity", "levels", "slope", "rate"])
