import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_segment
from pitchtrace.errors import InsufficientFrames, OutOfBounds
from pitchtrace.geometry import (
    N_AGENTS,
    Outcome,
    Phase,
    PhaseLabel,
    PitchSpec,
    displacement_stats,
    normalized_to_pitch,
    pitch_to_normalized,
    validate_segment,
)
from pitchtrace.synth import Scenario, ScenarioSpec, generate_synthetic

coord = st.floats(-1.0, 1.0)
ycoord = st.floats(-0.42, 0.42)


def test_pitch_to_normalized_landmarks():
    assert np.array_equal(pitch_to_normalized((52.5, 34)), [0.0, 0.0])
    assert np.allclose(pitch_to_normalized((0, 0)), [-1.0, -0.42], atol=1e-15)
    assert np.allclose(pitch_to_normalized((105, 68)), [1.0, 0.42], atol=1e-15)


def test_normalized_to_pitch_landmarks():
    assert np.allclose(normalized_to_pitch((0, 0)), [52.5, 34])
    assert np.allclose(normalized_to_pitch((1, 0.42)), [105, 68])
    assert np.allclose(normalized_to_pitch((-0.5, 0.21)), [26.25, 51])


def test_conversions_reject_out_of_pitch():
    with pytest.raises(OutOfBounds):
        pitch_to_normalized((106, 10))
    with pytest.raises(OutOfBounds):
        normalized_to_pitch((1.5, 0))
    with pytest.raises(OutOfBounds):
        pitch_to_normalized((np.nan, 1))


def test_round_trip_1000_points(rng):
    q = np.column_stack([rng.uniform(-1, 1, 1000), rng.uniform(-0.42, 0.42, 1000)])
    back = pitch_to_normalized(normalized_to_pitch(q))
    assert np.max(np.abs(back - q)) <= 1e-12


def test_custom_pitch_dimensions():
    spec = PitchSpec(100.0, 64.0)
    assert np.allclose(pitch_to_normalized((50, 32), spec), [0, 0])
    with pytest.raises(ValueError):
        PitchSpec(-1.0, 60.0)


def test_phase_label_outcome_rules():
    PhaseLabel(Phase.ATTACK, Outcome.SUCCESSFUL)
    PhaseLabel(Phase.TRANSITION)
    with pytest.raises(ValueError):
        PhaseLabel(Phase.ATTACK)
    with pytest.raises(ValueError):
        PhaseLabel(Phase.TRANSITION, Outcome.FAILED)


def test_segment_defaults_and_immutability():
    s = make_segment(np.zeros((5, N_AGENTS, 2)))
    assert s.n_frames == 5
    assert np.array_equal(s.frame_idx, np.arange(5))
    assert s.observed.all()
    with pytest.raises(ValueError):
        s.positions[0, 0, 0] = 1.0
    assert s.head(3).n_frames == 3
    assert s == make_segment(np.zeros((5, N_AGENTS, 2)))


def test_validate_well_formed():
    assert validate_segment(make_segment(np.zeros((75, N_AGENTS, 2)))) == []


def test_validate_missing_agent():
    problems = validate_segment(make_segment(np.zeros((4, 22, 2))))
    assert any("missing agent" in p for p in problems)


def test_validate_bounds_violation():
    pos = np.zeros((4, N_AGENTS, 2))
    pos[2, 5] = (1.5, 0.0)
    problems = validate_segment(make_segment(pos))
    assert any("bounds violation" in p for p in problems)


def test_validate_nan_and_time_order():
    pos = np.zeros((4, N_AGENTS, 2))
    pos[1, 3, 0] = np.nan
    s = make_segment(pos).replace(frame_idx=np.array([0, 2, 1, 3]))
    problems = validate_segment(s)
    assert any("NaN" in p for p in problems)
    assert any("non-monotonic" in p for p in problems)


@pytest.mark.parametrize("scenario", list(Scenario))
def test_generated_segments_validate(scenario):
    for seed in range(10):
        assert validate_segment(generate_synthetic(ScenarioSpec(scenario, seed=seed))) == []


def test_displacement_stats_cases():
    assert displacement_stats(np.zeros((30, 2)), 10).s_t == 0.0
    line = np.column_stack([np.arange(40) * 0.02, np.zeros(40)])
    assert displacement_stats(line, 25).s_t == pytest.approx(0.02, abs=1e-15)
    piece = np.array([[0, 0], [0.1, 0], [0.1, 0.1]])
    assert displacement_stats(piece, 3).s_t == pytest.approx(0.1, abs=1e-15)


def test_displacement_stats_short_trajectory():
    with pytest.raises(InsufficientFrames):
        displacement_stats(np.zeros((1, 2)))


@given(st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.2, 0.2)), min_size=2, max_size=40),
       st.floats(-0.4, 0.4), st.floats(-0.2, 0.2))
def test_displacement_stats_translation_invariant(pts, dx, dy):
    traj = np.array(pts)
    a = displacement_stats(traj).s_t
    b = displacement_stats(traj + [dx, dy]).s_t
    # float subtraction of shifted points differs from the unshifted one by rounding only
    assert b == pytest.approx(a, rel=1e-12, abs=1e-15)


@given(st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.2, 0.2)), min_size=2, max_size=40),
       st.floats(0.01, 2.0))
def test_displacement_stats_scales_linearly(pts, k):
    traj = np.array(pts)
    assert displacement_stats(traj * k).s_t == pytest.approx(k * displacement_stats(traj).s_t, rel=1e-12, abs=1e-14)
