import numpy as np
import pytest

from hho_afem.afem.benchmarks import (
    ODP_LSHAPE_ENERGY,
    ODP_SQUARE_ENERGY,
    PLAPLACE_LSHAPE_ENERGY,
    PLAPLACE_SQUARE_ENERGY,
    benchmark,
    twowell_exact_energy,
)
from hho_afem.afem.enums import ProblemId
from hho_afem.afem.loop import convergence_rates, read_history, run_afem, write_csv
from hho_afem.afem.marking import aitken_extrapolate
from hho_afem.fem.solve import SolverConfig

pytestmark = pytest.mark.slow


def _assert_guaranteed(records, reference):
    assert records
    for record in records:
        assert record.converged
        assert record.LEB <= reference + 1e-8
        assert record.RHS >= 0.0


class TestGuaranteedLowerBounds(object):
    def test_plaplace_square_uniform(self):
        config = benchmark(ProblemId.PLAPLACE_SQUARE, k=1, theta=1.0, max_ndof=700)
        records = run_afem(config)

        _assert_guaranteed(records, PLAPLACE_SQUARE_ENERGY)
        assert len(records) >= 3
        errors = [record.err_grad for record in records]
        assert np.all(np.isfinite(errors))
        assert errors[-1] < errors[0]

    def test_plaplace_lshape_adaptive(self):
        config = benchmark(ProblemId.PLAPLACE_LSHAPE, k=0, theta=0.5, max_ndof=400)
        _assert_guaranteed(run_afem(config), PLAPLACE_LSHAPE_ENERGY)

    def test_odp_lshape_adaptive(self):
        config = benchmark(ProblemId.ODP_LSHAPE, k=1, theta=0.5, max_ndof=400)
        records = run_afem(config)

        _assert_guaranteed(records, ODP_LSHAPE_ENERGY)
        assert len(records) >= 3

    def test_twowell_uniform(self):
        config = benchmark(ProblemId.TWOWELL, k=0, theta=1.0, max_ndof=300)
        records = run_afem(config)

        _assert_guaranteed(records, twowell_exact_energy())
        assert len(records) >= 2

    def test_condensed_solver_matches(self):
        config = benchmark(ProblemId.ODP_SQUARE, k=1, theta=1.0, max_ndof=150)
        plain = run_afem(config)
        condensed = run_afem(config.replace(solver=SolverConfig(condense=True)))

        assert [record.ndof for record in condensed] == [record.ndof for record in plain]
        np.testing.assert_allclose(
            [record.Eh for record in condensed], [record.Eh for record in plain], atol=1e-9
        )


def _history(records, tmp_path):
    path = tmp_path / "history.csv"
    write_csv(records, path)
    return read_history(path)


class TestGuaranteeAcrossDegrees(object):
    @pytest.mark.parametrize("k", [0, 1, 2])
    @pytest.mark.parametrize("theta", [1.0, 0.5])
    def test_plaplace_square(self, k, theta):
        config = benchmark(ProblemId.PLAPLACE_SQUARE, k=k, theta=theta, max_ndof=3000)
        _assert_guaranteed(run_afem(config), PLAPLACE_SQUARE_ENERGY)

    @pytest.mark.parametrize(
        "problem, reference",
        [
            (ProblemId.ODP_SQUARE, ODP_SQUARE_ENERGY),
            (ProblemId.ODP_LSHAPE, ODP_LSHAPE_ENERGY),
            (ProblemId.PLAPLACE_LSHAPE, PLAPLACE_LSHAPE_ENERGY),
        ],
    )
    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_extrapolated_references(self, problem, reference, k):
        records = run_afem(benchmark(problem, k=k, theta=0.5, max_ndof=3000))
        assert all(record.converged for record in records)
        assert all(record.LEB <= reference + 1e-5 for record in records)


class TestConvergenceRatesFromRuns(object):
    @pytest.mark.parametrize("k", [0, 1, 2])
    def test_plaplace_square_uniform(self, k, tmp_path):
        config = benchmark(ProblemId.PLAPLACE_SQUARE, k=k, theta=1.0, max_ndof=30000)
        history = _history(run_afem(config), tmp_path)
        rates = convergence_rates(
            history,
            columns=("err_stress", "gap"),
            reference_energy=PLAPLACE_SQUARE_ENERGY,
        ).set_index("quantity")

        assert rates.loc["err_stress", "rate"] == pytest.approx(k + 1.0, abs=0.35)
        assert rates.loc["gap", "rate"] == pytest.approx(k + 1.0, abs=0.35)
        assert rates.loc["E-LEB", "rate"] >= k / 2.0 + 1.0 - 0.35

    def test_plaplace_square_adaptive_lowest_order(self, tmp_path):
        config = benchmark(ProblemId.PLAPLACE_SQUARE, k=0, theta=0.5, max_ndof=5000)
        history = _history(run_afem(config), tmp_path)
        rates = convergence_rates(history, columns=("RHS",), last=5).set_index("quantity")

        assert history["ndof"].iloc[-1] > 2000
        assert rates.loc["RHS", "rate"] >= 0.8


class TestOptimalDesign(object):
    def test_square_extrapolated_energy(self):
        config = benchmark(ProblemId.ODP_SQUARE, k=2, theta=1.0, max_ndof=11000)
        records = run_afem(config)

        assert len(records) >= 3
        result = aitken_extrapolate([record.Eh for record in records])
        assert not result.degenerate
        assert result.value == pytest.approx(ODP_SQUARE_ENERGY, abs=1e-6)

    def test_square_adaptive_microstructure(self):
        config = benchmark(ProblemId.ODP_SQUARE, k=0, theta=0.5, max_ndof=10000)
        records = run_afem(config)

        assert all(record.converged for record in records)
        below, mixed, above = records[-1].phase_counts
        assert below > 0
        assert mixed > 0
        assert above > 0


class TestTwoWellRuns(object):
    @pytest.mark.parametrize("k, theta", [(0, 1.0), (1, 0.5)])
    def test_reaches_fine_meshes(self, k, theta):
        config = benchmark(ProblemId.TWOWELL, k=k, theta=theta, max_ndof=6000)
        records = run_afem(config)

        _assert_guaranteed(records, twowell_exact_energy())
        assert records[-1].ndof > 1500
