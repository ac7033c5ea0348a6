"""Error indicators, bulk-chasing marking and the adaptive driver.

Energy indicators localize the energy norm of the residual representative
per cell (interior-facet jump contributions split half to each
neighbour, so the squares sum to the global norm exactly).  Goal-oriented
indicators are products of the local energy norms of the primal and
adjoint residual representatives.
"""

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .analysis import error_norms, local_energy_products, qoi_error, qoi_reference
from .forms import (
    assemble_gram,
    assemble_load,
    assemble_qoi,
    assemble_stabilized,
    cell_quadrature,
    write_matrix_market,
)
from .mesh import classify_boundary, refine
from .reference import triangle_rule
from .solvers import (
    SaddleFactorization,
    orthogonality_residual,
    solve_adjoint,
    solve_cip_enriched,
    solve_saddle,
)
from .spaces import DiscreteFunction, build_space, enriched, inject_trial, trial_lagrange


@dataclass(frozen=True)
class Indicators:
    """Per-cell nonnegative indicators with total = sqrt(sum of squares)."""

    eta: np.ndarray
    total: float


def energy_indicators(epsilon, data, degree=None, facet_deg=None):
    """Localized energy norm of the residual representative."""
    parts = local_energy_products(epsilon, epsilon, data, degree, facet_deg)
    parts = np.maximum(parts, 0.0)  # guard roundoff on zero cells
    return Indicators(np.sqrt(parts), float(np.sqrt(parts.sum())))


def goa_indicators(epsilon, eps_star, data, degree=None, facet_deg=None):
    """Product indicators |||eps|||_T |||eps*|||_T and the scalar estimate.

    Returns (indicators, E^2) where E^2 = |(eps, eps*)| in the energy
    inner product.
    """
    pa = np.maximum(local_energy_products(epsilon, epsilon, data, degree, facet_deg), 0.0)
    pb = np.maximum(local_energy_products(eps_star, eps_star, data, degree, facet_deg), 0.0)
    pab = local_energy_products(epsilon, eps_star, data, degree, facet_deg)
    eta = np.sqrt(pa) * np.sqrt(pb)
    return Indicators(eta, float(np.sqrt((eta**2).sum()))), float(abs(pab.sum()))


def dorfler_mark(indicators, theta, squared=True):
    """Smallest cell set carrying the requested fraction of the total.

    Greedy selection by descending indicator, ties broken by cell index.
    With ``squared`` the bulk criterion is on eta^2 against theta^2 of
    the total (energy mode); otherwise on eta against theta of the sum
    (goal-oriented product indicators).
    """
    if not 0.0 < theta <= 1.0:
        raise ValueError("marking fraction must lie in (0, 1]")
    eta = np.asarray(getattr(indicators, "eta", indicators), dtype=float)
    key = eta**2 if squared else eta
    total = key.sum()
    if total <= 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(eta)), -key))
    csum = np.cumsum(key[order])
    target = (theta**2 if squared else theta) * total
    count = int(np.searchsorted(csum, target * (1.0 - 1e-12)) + 1)
    count = min(count, int(np.count_nonzero(key)))
    return np.sort(order[:count])


CSV_COLUMNS = [
    "iter",
    "dofs_trial",
    "dofs_test",
    "dofs_total",
    "est_energy",
    "err_L2_rel",
    "err_triple",
    "err_qoi_rel",
    "saturation",
    "marked",
]


@dataclass
class AdaptRecord:
    """One adaptive iteration: sizes, estimates, errors, marking.

    Fields beyond the CSV schema (h_max, kkt_residual, orthogonality,
    est_goa) are diagnostics used by the verification suite.
    """

    iteration: int
    dofs_trial: int
    dofs_test: int
    dofs_total: int
    est_energy: float
    err_l2_rel: float = math.nan
    err_triple: float = math.nan
    err_qoi_rel: float = math.nan
    saturation: float = math.nan
    marked: int = 0
    h_max: float = math.nan
    kkt_residual: float = math.nan  # normalized by 1 + max|rhs|
    orthogonality: float = math.nan  # normalized by 1 + max|rhs|
    est_goa: float = math.nan
    robustness: float = math.nan  # |theta_h - u_h| in energy norm over est_energy

    def csv_row(self):
        return [
            self.iteration,
            self.dofs_trial,
            self.dofs_test,
            self.dofs_total,
            self.est_energy,
            self.err_l2_rel,
            self.err_triple,
            self.err_qoi_rel,
            self.saturation,
            self.marked,
        ]


def write_records_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.csv_row())


@dataclass
class LoopConfig:
    """Knobs of an adaptive run; at least one stop rule is required."""

    p: int = 1
    k: int = 3
    theta: float = 0.5
    mode: str = "energy"  # energy | goa | uniform
    alpha: float = 3.5
    max_dofs: int | None = None
    max_iters: int | None = None
    sigma0: float | None = None
    quad_degree: int | None = None
    saturation: bool | None = None  # None: on for non-goa runs with an exact solution
    saturation_max_dofs: int = 20000
    outdir: str | None = None
    vtk: bool = False
    dump_matrices: bool = False

    def validate(self):
        if self.p not in (1, 2, 3):
            raise ValueError("trial degree p must be 1, 2 or 3")
        if not (self.k > max(self.p, 2) or self.k <= self.p):
            raise ValueError("bubble degree k must satisfy k > max(p, 2) or k <= p")
        if self.k < 1:
            raise ValueError("bubble degree k must be >= 1")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("marking fraction theta must lie in (0, 1]")
        if self.mode not in ("energy", "goa", "uniform"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_dofs is None and self.max_iters is None:
            raise ValueError("either max_dofs or max_iters must be set")
        return self


def _reference_l2(exact, degree=12, n=96):
    """L2 norm of the exact solution on a fixed fine structured grid."""
    from .mesh import build_structured_mesh

    mesh = build_structured_mesh(n)
    rule = triangle_rule(degree)
    pts, w = cell_quadrature(mesh, rule)
    vals = np.asarray(exact(pts.reshape(-1, 2)), dtype=float).reshape(w.shape)
    return float(np.sqrt(np.einsum("cq,cq->", w, vals**2)))


def adaptive_loop(bench, config):
    """SOLVE -> ESTIMATE -> MARK -> REFINE until the stop rule fires.

    Returns the list of per-iteration records; when ``config.outdir`` is
    set the records are also serialized as CSV there together with any
    requested per-iteration dumps.
    """
    config.validate()
    mesh = bench.initial_mesh()
    data = replace(
        bench.data,
        penalty_order=config.k,
        penalty_exponent=config.alpha,
        gram_weight=config.sigma0 if config.sigma0 is not None else bench.data.gram_weight,
    )
    track_sat = (
        config.saturation
        if config.saturation is not None
        else (bench.exact is not None and config.mode != "goa")
    )
    goa = config.mode == "goa"
    if goa and bench.qoi_region is None:
        raise ValueError("goal-oriented mode needs a benchmark with a QoI region")

    exact_l2 = _reference_l2(bench.exact) if bench.exact is not None else None
    qoi_ref = None
    if goa and bench.exact is not None:
        qoi_ref = qoi_reference(bench.exact, bench.qoi_region)

    outdir = None
    if config.outdir is not None:
        import pathlib

        outdir = pathlib.Path(config.outdir)
        outdir.mkdir(parents=True, exist_ok=True)

    records = []
    it = 0
    while True:
        bc = classify_boundary(mesh, data.velocity)
        trial = build_space(mesh, trial_lagrange(config.p))
        test = build_space(mesh, enriched(config.p, config.k))
        deg = config.quad_degree
        G = assemble_gram(test, data, degree=deg)
        B = assemble_stabilized(trial, test, data, bc, degree=deg)
        load = assemble_load(test, data, bc, degree=deg)
        factor = SaddleFactorization(G, B)
        sol = solve_saddle(G, B, load, trial, test, factor=factor)

        B_full = None
        est_goa = math.nan
        err_qoi = math.nan
        if goa:
            q_trial = assemble_qoi(trial, bench.qoi_region)
            q_test = assemble_qoi(test, bench.qoi_region)
            B_full = assemble_stabilized(test, test, data, bc, degree=deg)
            adj = solve_adjoint(G, B, q_trial, q_test, B_full, trial, test, factor=factor)
            indicators, goa_sq = goa_indicators(sol.epsilon, adj.eps_star, data, degree=deg)
            est_goa = math.sqrt(goa_sq)
            if qoi_ref is not None:
                err_qoi = qoi_error(sol.u, bench.exact, bench.qoi_region, exact_value=qoi_ref)
        else:
            indicators = energy_indicators(sol.epsilon, data, degree=deg)

        err_l2_rel = err_triple = sat = robustness = math.nan
        dofs_total = trial.dim + test.dim
        if bench.exact is not None:
            rep = error_norms(sol.u, bench.exact, data)
            err_l2_rel = rep.l2 / exact_l2
            err_triple = rep.triple
            if track_sat and dofs_total <= config.saturation_max_dofs:
                if B_full is None:
                    B_full = assemble_stabilized(test, test, data, bc, degree=deg)
                theta_h = solve_cip_enriched(B_full, load, test)
                sat = error_norms(theta_h, bench.exact, data).triple / rep.triple
                diff = DiscreteFunction(
                    test, theta_h.coefficients - inject_trial(sol.u, test).coefficients
                )
                robustness = error_norms(diff, None, data).triple / indicators.total

        scale = 1.0 + float(np.abs(load).max(initial=0.0))
        record = AdaptRecord(
            iteration=it,
            dofs_trial=trial.dim,
            dofs_test=test.dim,
            dofs_total=dofs_total,
            est_energy=indicators.total,
            err_l2_rel=err_l2_rel,
            err_triple=err_triple,
            err_qoi_rel=err_qoi,
            saturation=sat,
            h_max=float(mesh.cell_diameters.max()),
            kkt_residual=sol.kkt_residual / scale,
            orthogonality=orthogonality_residual(B, sol.epsilon) / scale,
            est_goa=est_goa,
            robustness=robustness,
        )

        if outdir is not None:
            if config.vtk:
                from .vtkio import write_vtk

                point_u = sol.u.coefficients[: len(mesh.vertices)]
                write_vtk(
                    outdir / f"mesh_{it:04d}.vtk",
                    mesh,
                    cell_data={"indicator": indicators.eta},
                    point_data={"u": point_u},
                )
            if config.dump_matrices:
                write_matrix_market(outdir / f"gram_{it:04d}.mtx", G)
                write_matrix_market(outdir / f"operator_{it:04d}.mtx", B)

        stop = (config.max_dofs is not None and dofs_total >= config.max_dofs) or (
            config.max_iters is not None and it >= config.max_iters
        )
        if stop:
            records.append(record)
            break

        if config.mode == "uniform":
            # two full bisection sweeps halve h and quadruple the cells
            record.marked = len(mesh.cells)
            records.append(record)
            mesh = refine(mesh, np.arange(len(mesh.cells)))
            mesh = refine(mesh, np.arange(len(mesh.cells)))
        else:
            marked = dorfler_mark(indicators, config.theta, squared=not goa)
            record.marked = len(marked)
            records.append(record)
            if len(marked) == 0:
                break
            mesh = refine(mesh, marked)
        it += 1

    if outdir is not None:
        write_records_csv(outdir / "records.csv", records)
        from .vtkio import write_mesh_txt

        write_mesh_txt(outdir / "final_mesh.txt", mesh)
    return records
