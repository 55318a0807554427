"""Tests for the acceptance suite at reduced scale."""

import pytest

from dyadic_bellman.config import LabConfig
from dyadic_bellman.extremal_search import SweepRow
from dyadic_bellman.reports import CsvTable
from dyadic_bellman.suite import (
    CorpusRow,
    build_corpus,
    check_corpus,
    check_determinism,
    check_inequalities,
    check_negative_control,
    check_sweep,
    check_special_functions,
    corpus_rows,
    negative_control_table,
    sweep_table,
    worked_example_checks,
)
from dyadic_bellman.sharp_inequalities import sweep_inequalities


@pytest.fixture
def small_config():
    return LabConfig(
        corpus_size=12,
        inequality_instances=6,
        sweep_depths=[3],
        sweep_restarts=2,
        max_steps=30,
        negative_control_depths=[4, 8],
        threads=1,
    )


def _failed(checks):
    return [c.name for c in checks if not c.passed]


class TestCriteria:
    def test_special_functions(self):
        assert _failed(check_special_functions()) == []

    def test_corpus(self):
        rows = corpus_rows(build_corpus(11, 30), LabConfig(threads=1))
        assert len(rows) == 30
        assert _failed(check_corpus(rows, 1e-9)) == []

    def test_worked_example(self):
        checks = worked_example_checks()
        assert len(checks) == 4
        assert _failed(checks) == []

    def test_inequalities(self):
        records = sweep_inequalities(build_corpus(5, 20), seed=5)
        assert _failed(check_inequalities(records, 1e-9)) == []

    def test_negative_control(self):
        table = negative_control_table([12, 24])
        assert table.columns == ("depth", "c_prime", "own_residual", "eigen_residual")
        assert _failed(check_negative_control(table)) == []

    def test_negative_control_too_shallow(self):
        """At depth 12 the own residual is still above its target."""
        failed = _failed(check_negative_control(negative_control_table([4, 12])))
        assert "negative_own_residual" in failed
        assert "negative_eigenvalue_margin" not in failed


def _sweep(gaps, residuals, bound=3.0):
    rows = [
        SweepRow(depth=4 + i, attained=bound - g, bound=bound, gap=g, residual=r,
                 mu_zero=0.0, gap_beta_star=0.1, loc_dev_f=0.0, loc_dev_F=0.0).to_row()
        for i, (g, r) in enumerate(zip(gaps, residuals))
    ]
    return CsvTable(SweepRow.COLUMNS, rows)


class TestSweepTrends:
    def test_shrinking_sweep_passes(self):
        checks = check_sweep(_sweep([0.8, 0.6, 0.35], [0.12, 0.09, 0.05]), 1e-9)
        assert _failed(checks) == []

    def test_slow_gap_fails(self):
        failed = _failed(check_sweep(_sweep([0.8, 0.7, 0.45], [0.12, 0.09, 0.05]), 1e-9))
        assert failed == ["sweep_gap_halves"]

    def test_rising_residual_fails(self):
        failed = _failed(check_sweep(_sweep([0.8, 0.6, 0.35], [0.12, 0.13, 0.05]), 1e-9))
        assert failed == ["sweep_residual_trend"]

    def test_default_sweep(self):
        """The default depth range closes the gap and the residual."""
        config = LabConfig(threads=1)
        checks = {c.name: c for c in check_sweep(sweep_table(config, config.sweep_depths),
                                                   config.tolerances.tau_num)}
        for name in ("sweep_below_bound", "sweep_attained_nondecreasing",
                     "sweep_gap_halves", "sweep_residual_trend"):
            assert checks[name].passed, (name, checks[name].value, checks[name].detail)


class TestCorpus:
    def test_seeded(self):
        first = build_corpus(3, 5)
        second = build_corpus(3, 5)
        for (a, p), (b, q) in zip(first, second):
            assert p == q
            assert a.tree.structurally_equal(b.tree)
            assert a.values.tolist() == b.values.tolist()

    def test_exponents_cycle(self):
        assert [p for _, p in build_corpus(3, 6)] == [1.5, 2.0, 3.0, 1.5, 2.0, 3.0]

    def test_threads_do_not_change_rows(self):
        corpus = build_corpus(9, 10)
        serial = CsvTable(CorpusRow.COLUMNS, [r.to_row() for r in corpus_rows(corpus, LabConfig(threads=1))])
        threaded = CsvTable(CorpusRow.COLUMNS, [r.to_row() for r in corpus_rows(corpus, LabConfig(threads=3))])
        assert serial.checksum == threaded.checksum


class TestTables:
    def test_sweep_below_bound(self, small_config):
        table = sweep_table(small_config, [3, 4])
        assert table.column("depth") == [3, 4]
        bound = table.column("bound")[0]
        assert bound == pytest.approx(3.0)
        assert all(a <= bound * (1.0 + 1e-9) for a in table.column("attained"))

    def test_determinism(self, small_config):
        corpus = build_corpus(small_config.seed, small_config.corpus_size)
        tables = {
            "corpus": CsvTable(CorpusRow.COLUMNS,
                               [r.to_row() for r in corpus_rows(corpus, small_config)]),
            "slacks": CsvTable(
                ("instance", "inequality", "beta", "slack", "family_size"),
                [r.to_row() for r in sweep_inequalities(
                    corpus[: small_config.inequality_instances], small_config.seed)],
            ),
            "negative_control": negative_control_table(small_config.negative_control_depths),
            "sweep": sweep_table(small_config, small_config.sweep_depths),
        }
        checks = check_determinism(small_config, tables)
        assert _failed(checks) == []
