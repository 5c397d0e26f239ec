"""Tests for model classes and data structures."""
import pytest
from pydantic import ValidationError

from spatial_match import (
    CostReport,
    GammaSchedule,
    HypercubeId,
    MatchingResult,
    ScalingFit,
    SimConfig,
    SweepSpec,
    WalkSpec,
)


def test_sim_config_defaults():
    """Test the defaults of a minimal config."""
    cfg = SimConfig(model="static", N=16)
    assert cfg.d == 1
    assert cfg.M == 0
    assert cfg.replications == 1
    assert cfg.policy.value == "hierarchical_greedy"
    assert cfg.norm.value == "euclidean"
    assert cfg.exact_cap == 4096


def test_sim_config_policy_alias():
    """Test that 'hg' is accepted for Hierarchical Greedy."""
    assert SimConfig(model="semi_dynamic", N=4, policy="hg").policy.value == "hierarchical_greedy"


def test_sim_config_model_fields():
    """Test the per-model required sizes."""
    with pytest.raises(ValidationError, match="m is required"):
        SimConfig(model="fully_dynamic", N=10)
    with pytest.raises(ValidationError, match="n is required"):
        SimConfig(model="capacity", N=10, m=4)
    with pytest.raises(ValidationError, match="warmup"):
        SimConfig(model="static", N=10, warmup=10)
    with pytest.raises(ValidationError):
        SimConfig(model="static", N=10, seed=-1)


def test_gamma_schedule_derived():
    """Test etas and boundaries derived from the thresholds."""
    schedule = GammaSchedule(d=1, gammas=[6.0, 14.0])
    assert schedule.ell0 == 1
    assert schedule.etas == [7.0]
    assert schedule.lower_bounds == [6, 14]
    assert schedule.upper_bounds == [6]
    dumped = schedule.model_dump()
    assert dumped["etas"] == [7.0]


def test_gamma_schedule_needs_root():
    """Test that an empty schedule is refused."""
    with pytest.raises(ValidationError):
        GammaSchedule(d=1, gammas=[])


def test_hypercube_id_frozen():
    """Test that cell ids are hashable values."""
    cell = HypercubeId(level=1, index=(0, 1))
    assert cell == HypercubeId(level=1, index=(0, 1))
    assert len({cell, HypercubeId(level=1, index=(0, 1))}) == 1
    with pytest.raises(ValidationError):
        cell.level = 2


def test_matching_result_injective():
    """Test that a supply index cannot be used twice."""
    MatchingResult(pairs=[(0, 1), (1, 0)], total_cost=0.2, avg_cost=0.1)
    with pytest.raises(ValidationError, match="supply index"):
        MatchingResult(pairs=[(0, 1), (1, 1)], total_cost=0.2, avg_cost=0.1)


def test_walk_spec_bounds():
    """Test the boundary and start checks."""
    spec = WalkSpec(level=0, q=0.5, lower=2, upper=4, start=3)
    assert spec.width == 3
    with pytest.raises(ValidationError):
        WalkSpec(level=0, q=0.5, lower=4, upper=2, start=3)
    with pytest.raises(ValidationError):
        WalkSpec(level=0, q=0.5, lower=2, upper=4, start=5)
    with pytest.raises(ValidationError):
        WalkSpec(level=0, q=0.0, lower=2, upper=4, start=3)


def test_sweep_spec_grid():
    """Test grid expansion and validation."""
    assert SweepSpec(param="m", grid={"powers_of_two": [4, 6]}).grid == [16, 32, 64]
    with pytest.raises(ValidationError):
        SweepSpec(param="m", grid=[])
    with pytest.raises(ValidationError):
        SweepSpec(param="m", grid=[-1, 4])
    with pytest.raises(ValidationError):
        SweepSpec(param="d", grid=[1, 2])


def test_scaling_fit_r2_range():
    """Test the r2 sanity check."""
    with pytest.raises(ValidationError):
        ScalingFit(exponent=-0.5, intercept=0.0, stderr=0.01, r2=1.5, points=[])


def test_cost_report_traces_not_serialized():
    """Test that traces stay out of the JSON document."""
    report = CostReport(model="static", d=1, replications=1, mean_cost=0.25)
    report._traces.append(object())
    assert len(report.traces) == 1
    assert "traces" not in report.model_dump()
    assert report.per_period_cost == {"mean": 0.25, "stderr": None}
