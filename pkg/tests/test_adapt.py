import csv
import math

import numpy as np
import pytest

from bubblefem import (
    DiscreteFunction,
    LoopConfig,
    ProblemData,
    adaptive_loop,
    assemble_gram,
    build_space,
    build_structured_mesh,
    dorfler_mark,
    energy_indicators,
    enriched,
    experiment1,
    experiment2,
    goa_indicators,
    write_records_csv,
)
from bubblefem.adapt import CSV_COLUMNS


def const(value):
    return lambda x: np.full(len(np.atleast_2d(x)), float(value))


def make_data(mu=1.0):
    return ProblemData(
        velocity=lambda x: np.tile([1.0, 0.5], (len(np.atleast_2d(x)), 1)),
        reaction=const(mu),
        source=const(0.0),
        inflow_data=const(0.0),
        reaction_floor=mu,
        penalty_order=3,
    )


class TestEnergyIndicators:
    def test_zero_function(self):
        m = build_structured_mesh(2)
        space = build_space(m, enriched(1, 3))
        ind = energy_indicators(DiscreteFunction(space), make_data())
        assert not ind.eta.any()
        assert ind.total == 0.0

    def test_bubble_support(self):
        m = build_structured_mesh(2)
        space = build_space(m, enriched(1, 3))
        fn = DiscreteFunction(space)
        cell = 3
        fn.coefficients[space.n_trial + cell] = 1.0
        ind = energy_indicators(fn, make_data())
        neighbours = {cell}
        for f in range(len(m.interior_edges)):
            if m.interior_plus[f] == cell:
                neighbours.add(int(m.interior_minus[f]))
            if m.interior_minus[f] == cell:
                neighbours.add(int(m.interior_plus[f]))
        positive = set(np.flatnonzero(ind.eta > 0).tolist())
        assert positive == neighbours

    def test_sum_identity_with_gram(self):
        m = build_structured_mesh(3)
        space = build_space(m, enriched(1, 3))
        data = make_data()
        G = assemble_gram(space, data)
        rng = np.random.default_rng(21)
        for _ in range(5):
            v = rng.standard_normal(space.dim)
            ind = energy_indicators(DiscreteFunction(space, v), data)
            quad = v @ (G @ v)
            assert abs(ind.total**2 - quad) < 1e-12 * quad
            assert abs((ind.eta**2).sum() - ind.total**2) < 1e-12 * ind.total**2


class TestGoaIndicators:
    def test_zero_adjoint(self):
        m = build_structured_mesh(2)
        space = build_space(m, enriched(1, 3))
        rng = np.random.default_rng(22)
        eps = DiscreteFunction(space, rng.standard_normal(space.dim))
        ind, est_sq = goa_indicators(eps, DiscreteFunction(space), make_data())
        assert not ind.eta.any()
        assert est_sq == 0.0

    def test_diagonal_case_matches_energy(self):
        m = build_structured_mesh(2)
        space = build_space(m, enriched(1, 3))
        data = make_data()
        rng = np.random.default_rng(23)
        eps = DiscreteFunction(space, rng.standard_normal(space.dim))
        energy = energy_indicators(eps, data)
        ind, est_sq = goa_indicators(eps, eps, data)
        assert np.allclose(ind.eta, energy.eta**2, atol=1e-14)
        G = assemble_gram(space, data)
        quad = eps.coefficients @ (G @ eps.coefficients)
        assert abs(est_sq - quad) < 1e-12 * quad

    def test_cauchy_schwarz(self):
        m = build_structured_mesh(3)
        space = build_space(m, enriched(1, 3))
        data = make_data()
        rng = np.random.default_rng(24)
        for _ in range(5):
            a = DiscreteFunction(space, rng.standard_normal(space.dim))
            b = DiscreteFunction(space, rng.standard_normal(space.dim))
            ind, est_sq = goa_indicators(a, b, data)
            bound = np.sqrt((energy_indicators(a, data).eta ** 2).sum()) * np.sqrt(
                (energy_indicators(b, data).eta ** 2).sum()
            )
            assert est_sq <= bound * (1.0 + 1e-12)


class TestDorflerMark:
    def test_theta_one_marks_all_positive(self):
        eta = np.array([0.5, 0.0, 0.2, 0.1])
        marked = dorfler_mark(eta, 1.0)
        assert sorted(marked.tolist()) == [0, 2, 3]

    def test_greedy_example(self):
        marked = dorfler_mark(np.array([3.0, 1.0, 1.0, 1.0]), 0.5)
        assert marked.tolist() == [0]

    def test_uniform_indicators(self):
        marked = dorfler_mark(np.ones(4), 0.5)
        assert len(marked) == 1

    def test_all_zero_terminates(self):
        assert len(dorfler_mark(np.zeros(5), 0.5)) == 0

    def test_ties_broken_by_index(self):
        # eta^2 = (1, 4, 4, 1), target 0.64 * 10: both tied cells, index order
        marked = dorfler_mark(np.array([1.0, 2.0, 2.0, 1.0]), 0.8)
        assert marked.tolist() == [1, 2]

    def test_rejects_bad_fraction(self):
        for theta in (0.0, -0.5, 1.5):
            with pytest.raises(ValueError):
                dorfler_mark(np.ones(3), theta)

    def test_monotone_in_fraction(self):
        rng = np.random.default_rng(25)
        for _ in range(50):
            eta = np.abs(rng.standard_normal(30))
            previous = set()
            for theta in (0.2, 0.4, 0.6, 0.8, 1.0):
                current = set(dorfler_mark(eta, theta).tolist())
                assert previous <= current
                previous = current

    def test_nonsquared_mode(self):
        eta = np.array([3.0, 1.0, 1.0, 1.0])
        # bulk on eta itself: need >= 0.5 * 6 = 3 -> cell 0 alone suffices
        assert dorfler_mark(eta, 0.5, squared=False).tolist() == [0]
        # need >= 0.7 * 6 = 4.2 -> cumulative 3, 4, 5: three cells
        assert dorfler_mark(eta, 0.7, squared=False).tolist() == [0, 1, 2]


class TestAdaptiveLoop:
    def test_zero_iterations_single_record(self):
        bench = experiment1(0.5)
        records = adaptive_loop(bench, LoopConfig(max_iters=0))
        assert len(records) == 1
        assert records[0].marked == 0

    def test_records_monotone_dofs(self):
        bench = experiment1(0.5)
        records = adaptive_loop(bench, LoopConfig(max_iters=4, saturation=False))
        assert len(records) == 5
        dofs = [r.dofs_total for r in records]
        assert all(b > a for a, b in zip(dofs, dofs[1:]))

    def test_uniform_mode_quadruples(self):
        bench = experiment1(0.5)
        records = adaptive_loop(bench, LoopConfig(mode="uniform", max_iters=2, saturation=False))
        # bubble count equals the cell count, which quadruples exactly
        cells = [r.dofs_test - r.dofs_trial for r in records]
        assert cells[1] == 4 * cells[0]
        assert cells[2] == 16 * cells[0]
        assert records[1].dofs_trial == pytest.approx(4 * records[0].dofs_trial, rel=0.15)
        assert records[1].h_max == pytest.approx(records[0].h_max / 2.0)
        assert records[2].h_max == pytest.approx(records[0].h_max / 4.0)

    def test_determinism(self):
        bench = experiment1(0.5)
        cfg = LoopConfig(max_iters=3, saturation=False)
        a = adaptive_loop(bench, cfg)
        b = adaptive_loop(bench, cfg)
        assert [r.dofs_total for r in a] == [r.dofs_total for r in b]
        assert [r.est_energy for r in a] == [r.est_energy for r in b]
        assert [r.marked for r in a] == [r.marked for r in b]

    def test_goa_marks_every_iteration(self):
        bench = experiment2()
        records = adaptive_loop(bench, LoopConfig(mode="goa", theta=0.2, max_iters=3))
        assert all(r.marked > 0 for r in records[:-1])
        assert all(math.isfinite(r.err_qoi_rel) for r in records)
        assert all(r.kkt_residual < 1e-9 for r in records)

    def test_stop_on_max_dofs(self):
        bench = experiment1(0.5)
        records = adaptive_loop(bench, LoopConfig(max_dofs=600, saturation=False))
        assert records[-1].dofs_total >= 600
        assert all(r.dofs_total < 600 for r in records[:-1])

    def test_rejects_missing_stop_rule(self):
        with pytest.raises(ValueError):
            LoopConfig().validate()

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            LoopConfig(p=4, max_iters=1).validate()
        with pytest.raises(ValueError):
            LoopConfig(p=1, k=2, max_iters=1).validate()  # k must be > max(p,2) or <= p
        with pytest.raises(ValueError):
            LoopConfig(theta=0.0, max_iters=1).validate()
        with pytest.raises(ValueError):
            LoopConfig(mode="foo", max_iters=1).validate()

    def test_csv_serialization(self, tmp_path):
        bench = experiment1(0.5)
        records = adaptive_loop(bench, LoopConfig(max_iters=2, saturation=False))
        path = tmp_path / "records.csv"
        write_records_csv(path, records)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == CSV_COLUMNS
        assert len(rows) == len(records) + 1
        assert int(rows[1][0]) == 0

    def test_outdir_artifacts(self, tmp_path):
        bench = experiment1(0.5)
        out = tmp_path / "run"
        adaptive_loop(
            bench,
            LoopConfig(max_iters=1, saturation=False, outdir=str(out), vtk=True,
                       dump_matrices=True),
        )
        assert (out / "records.csv").exists()
        assert (out / "mesh_0000.vtk").exists()
        assert (out / "gram_0000.mtx").exists()
        assert (out / "operator_0000.mtx").exists()
