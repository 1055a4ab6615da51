import io

import numpy as np
import pytest

from locdecomp.error_models import (CompositeModel, body_offset, map_translation,
                                    measured_difference)
from locdecomp.exceptions import (DimensionMismatch, NonMonotoneTime, ParseError)
from locdecomp.simulation import (InjectionConfig, inject_errors, load_trajectory,
                                  synthesize_trajectory, to_kinematic_inputs)

BODY_MAP = CompositeModel(components=(body_offset(), map_translation()))


def count_heading_change_events(trajectory):
    angles = np.array([s.heading.angle for s in trajectory])
    changing = np.abs(np.diff(np.unwrap(angles))) > 1e-9
    # count maximal runs of consecutive changes
    return int(np.sum(np.diff(np.concatenate([[0], changing.astype(int)])) == 1))


class TestLoadTrajectory:
    def test_well_formed_file(self):
        content = io.StringIO(
            "# t_s, east_m, north_m, heading_rad\n"
            "0.0, 1.0, 2.0, 0.1\n"
            "1.0, 2.0, 3.0, 0.2\n"
            "2.0, 3.0, 4.0, 0.3\n")
        samples = load_trajectory(content)
        assert len(samples) == 3
        np.testing.assert_allclose(samples[1].position, [2.0, 3.0])
        assert samples[2].heading.angle == pytest.approx(0.3)
        # central differences over the heading column
        assert samples[1].heading.rate == pytest.approx(0.1)

    def test_duplicate_timestamp(self):
        content = io.StringIO("0.0, 1.0, 2.0\n0.0, 2.0, 3.0\n")
        with pytest.raises(NonMonotoneTime):
            load_trajectory(content)

    def test_decreasing_timestamp(self):
        content = io.StringIO("1.0, 1.0, 2.0\n0.5, 2.0, 3.0\n")
        with pytest.raises(NonMonotoneTime):
            load_trajectory(content)

    def test_headings_derived_from_bearings(self):
        content = io.StringIO(
            "0.0, 0.0, 0.0\n"
            "1.0, 1.0, 0.0\n"
            "2.0, 1.0, 1.0\n")
        samples = load_trajectory(content)
        deltas = [(1.0, 0.0), (0.0, 1.0)]
        expected = [np.arctan2(dn, de) for de, dn in deltas]
        assert samples[0].heading.angle == pytest.approx(expected[0])
        assert samples[1].heading.angle == pytest.approx(expected[1])
        assert samples[2].heading.angle == pytest.approx(expected[1])

    def test_parse_error_carries_line_number(self):
        content = io.StringIO("0.0, 1.0, 2.0\n1.0, oops, 2.0\n")
        with pytest.raises(ParseError) as excinfo:
            load_trajectory(content)
        assert excinfo.value.line == 2

    def test_missing_decimal_point_rejected(self):
        content = io.StringIO("0, 1.0, 2.0\n")
        with pytest.raises(ParseError):
            load_trajectory(content)

    def test_wrong_column_count(self):
        with pytest.raises(ParseError):
            load_trajectory(io.StringIO("0.0, 1.0\n"))

    def test_empty_file(self):
        with pytest.raises(ParseError):
            load_trajectory(io.StringIO("# only comments\n"))

    def test_round_trips_through_a_real_file(self, tmp_path):
        path = tmp_path / "trace.csv"
        path.write_text("0.0, 0.0, 0.0, 0.0\n1.0, 10.0, 0.0, 0.0\n")
        samples = load_trajectory(path)
        assert len(samples) == 2


class TestSynthesizeTrajectory:
    def test_straight_headings_all_equal(self):
        trajectory = synthesize_trajectory("straight", 100)
        angles = {s.heading.angle for s in trajectory}
        assert len(angles) == 1
        assert len(trajectory) == 100

    def test_corner_has_exactly_five_turn_events(self):
        trajectory = synthesize_trajectory("corner", 200)
        assert len(trajectory) == 200
        assert count_heading_change_events(trajectory) == 5

    def test_corner_turns_are_quarter_turns(self):
        trajectory = synthesize_trajectory("corner", 200)
        angles = np.unwrap([s.heading.angle for s in trajectory])
        total_sweep = np.abs(np.diff(angles)).sum()
        assert total_sweep == pytest.approx(5 * np.pi / 2, rel=1e-9)

    def test_minimal_two_sample_straight(self):
        trajectory = synthesize_trajectory("straight", 2)
        assert len(trajectory) == 2
        step = np.linalg.norm(trajectory[1].position - trajectory[0].position)
        assert step == pytest.approx(10.0)

    @pytest.mark.parametrize("n", [20, 21, 33, 40])
    def test_small_corner_still_has_five_events(self, n):
        trajectory = synthesize_trajectory("corner", n)
        assert len(trajectory) == n
        assert count_heading_change_events(trajectory) == 5

    def test_corner_too_small_for_five_turns_rejected(self):
        with pytest.raises(ValueError, match="corner segment"):
            synthesize_trajectory("corner", 19)

    def test_timestamps_use_step(self):
        trajectory = synthesize_trajectory("straight", 5, step=0.25)
        np.testing.assert_allclose([s.t for s in trajectory],
                                   [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            synthesize_trajectory("circle", 10)

    def test_rejects_too_few_samples(self):
        with pytest.raises(ValueError):
            synthesize_trajectory("straight", 1)


class TestInjectErrors:
    def test_noiseless_constant_heading_difference(self):
        trajectory = synthesize_trajectory("straight", 20)
        cfg = InjectionConfig(true_params=[2.0, 1.0, 3.0, 2.0],
                              noise_sigma_ref=0.0, noise_sigma_other=0.0,
                              rng_seed=1)
        steps = inject_errors(trajectory, cfg, BODY_MAP)
        for s in steps:
            np.testing.assert_allclose(s.obs.d, [5.0, 3.0], atol=1e-12)

    def test_noiseless_neutral_parameters_give_zero_difference(self):
        trajectory = synthesize_trajectory("corner", 30)
        cfg = InjectionConfig(true_params=BODY_MAP.neutral_state(),
                              noise_sigma_ref=0.0, noise_sigma_other=0.0,
                              rng_seed=1)
        for s in inject_errors(trajectory, cfg, BODY_MAP):
            np.testing.assert_allclose(s.obs.d, [0.0, 0.0], atol=1e-12)

    def test_noiseless_difference_matches_model_exactly(self):
        trajectory = synthesize_trajectory("corner", 50)
        true = np.array([2.0, 1.0, 3.0, 2.0])
        cfg = InjectionConfig(true_params=true, noise_sigma_ref=0.0,
                              noise_sigma_other=0.0, rng_seed=3)
        for s in inject_errors(trajectory, cfg, BODY_MAP):
            np.testing.assert_allclose(
                measured_difference(s.p_ref, s.p_other),
                BODY_MAP.evaluate(true, s.u), atol=1e-12)

    def test_deterministic_for_equal_seeds(self):
        trajectory = synthesize_trajectory("straight", 50)
        cfg = InjectionConfig(true_params=[2.0, 1.0, 3.0, 2.0],
                              noise_sigma_ref=0.1, noise_sigma_other=0.1,
                              rng_seed=42)
        a = inject_errors(trajectory, cfg, BODY_MAP)
        b = inject_errors(trajectory, cfg, BODY_MAP)
        for sa, sb in zip(a, b):
            np.testing.assert_array_equal(sa.p_ref, sb.p_ref)
            np.testing.assert_array_equal(sa.p_other, sb.p_other)
            np.testing.assert_array_equal(sa.obs.d, sb.obs.d)

    def test_different_seeds_differ(self):
        trajectory = synthesize_trajectory("straight", 10)
        base = dict(true_params=[2.0, 1.0, 3.0, 2.0], noise_sigma_ref=0.1,
                    noise_sigma_other=0.1)
        a = inject_errors(trajectory, InjectionConfig(rng_seed=1, **base), BODY_MAP)
        b = inject_errors(trajectory, InjectionConfig(rng_seed=2, **base), BODY_MAP)
        assert not np.allclose(a[0].obs.d, b[0].obs.d)

    def test_observation_covariance_is_sum_of_localizer_variances(self):
        cfg = InjectionConfig.with_total_sigma([0.0, 0.0], 0.2, rng_seed=0)
        np.testing.assert_allclose(cfg.observation_covariance(),
                                   0.04 * np.eye(2), rtol=1e-12)

    def test_sample_covariance_matches_configured_noise(self):
        trajectory = synthesize_trajectory("straight", 10_000)
        true = np.array([2.0, 1.0, 3.0, 2.0])
        cfg = InjectionConfig.with_total_sigma(true, 0.2, rng_seed=7)
        steps = inject_errors(trajectory, cfg, BODY_MAP)
        residuals = np.array([s.obs.d - BODY_MAP.evaluate(true, s.u)
                              for s in steps])
        sample_cov = np.cov(residuals.T)
        np.testing.assert_allclose(np.diag(sample_cov), [0.04, 0.04], rtol=0.1)

    def test_dimension_mismatch(self):
        trajectory = synthesize_trajectory("straight", 5)
        cfg = InjectionConfig(true_params=[1.0, 2.0], noise_sigma_ref=0.0,
                              noise_sigma_other=0.0, rng_seed=0)
        with pytest.raises(DimensionMismatch):
            inject_errors(trajectory, cfg, BODY_MAP)

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            InjectionConfig(true_params=[0.0], noise_sigma_ref=-0.1,
                            noise_sigma_other=0.0, rng_seed=0)


class TestToKinematicInputs:
    def test_positions_and_headings_copied(self):
        trajectory = synthesize_trajectory("corner", 25)
        inputs = to_kinematic_inputs(trajectory)
        assert len(inputs) == 25
        for sample, u in zip(trajectory, inputs):
            np.testing.assert_array_equal(u.ref_position, sample.position)
            assert u.heading is sample.heading
            assert u.t == sample.t
