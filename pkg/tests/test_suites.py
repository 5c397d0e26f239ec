"""Tests for the acceptance suites."""
import pytest

from spatial_match import ConfigError
from spatial_match.suites import SUITES, SuiteContext, run_suite


def assert_all_passed(results):
    failed = [f"{r.criterion}: {r.detail}" for r in results if not r.passed]
    assert not failed, "; ".join(failed)


class TestSuiteRunner:
    """Test suite selection and scaling."""

    def test_unknown_suite(self):
        """Test that an unknown suite name is a config error."""
        with pytest.raises(ConfigError) as exc_info:
            run_suite("exponents")
        assert exc_info.value.field == "suite"

    def test_scale_must_be_positive(self):
        """Test the scale guard."""
        with pytest.raises(ConfigError):
            SuiteContext(scale=0)

    def test_counts_scale_with_floor(self):
        """Test scaled counts and their minimum."""
        ctx = SuiteContext(scale=0.1)
        assert ctx.count(200, 20) == 20
        assert ctx.count(1000, 50) == 100

    def test_criteria_unique(self):
        """Test that every criterion is named once across suites."""
        names = [criterion for checks in SUITES.values() for criterion, _ in checks]
        assert len(names) == len(set(names))

    def test_results_in_suite_order(self):
        """Test that results follow the suite's check order."""
        results = run_suite("oracles", scale=0.05)
        assert [r.criterion for r in results] == [criterion for criterion, _ in SUITES["oracles"]]
        assert all(r.seconds >= 0 for r in results)
        assert_all_passed(results)


@pytest.mark.slow
class TestReducedScaleSuites:
    """Run the long acceptance suites at reduced scale."""

    def test_invariants(self):
        """Test boundary invariants, walk domination and the reflected walk."""
        assert_all_passed(run_suite("invariants", scale=0.2, threads=2, seed=1))

    def test_exponents_fast(self):
        """Test the static, semi-dynamic line and baseline checks."""
        assert_all_passed(run_suite("exponents-fast", scale=0.25, threads=2, seed=1))

    def test_exponents_full(self):
        """Test the cube, fully dynamic band and line sandwich checks."""
        assert_all_passed(run_suite("exponents-full", scale=0.25, threads=2, seed=1))

    def test_capacity(self):
        """Test the capacity exponent with a shorter horizon per grid point."""
        assert_all_passed(run_suite("capacity", scale=0.5, threads=2, seed=1))
