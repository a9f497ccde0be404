import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowsde.errors import DomainError
from flowsde.flow import FlowField, GaussianEndpoint, score_from_velocity, two_gaussian_field
from flowsde.sde import (CATALOG_FAMILIES, DiffusionSchedule, Family, GammaSchedule, SdeCoefficients,
                         TimeDirection, noise_rescaled_coefficients, family_coefficients,
                         fused_score_product, g_tilde, reverse_coefficients,
                         reverse_time_coefficients, singular_sde_coefficients,
                         marginal_preserving_transform)

V_MID = 0.5 / 0.325  # toy velocity at x=0, t=0.5
STOCHASTIC = (Family.CONSTANT, Family.SINGULAR, Family.NONSINGULAR, Family.ZEROENDS)


def _field(var1=1.0):
    return two_gaussian_field(GaussianEndpoint(-1.0, 0.3), GaussianEndpoint(0.0, var1))


class TestSchedule:
    @pytest.mark.parametrize("fam,powers", [(Family.CONSTANT, (0, 0)), (Family.SINGULAR, (1, -1)),
                                            (Family.NONSINGULAR, (1, 0)), (Family.ZEROENDS, (1, 1))])
    def test_powers(self, fam, powers):
        assert DiffusionSchedule(fam).powers == powers

    def test_deterministic_forces_zero(self):
        s = DiffusionSchedule(Family.DETERMINISTIC, 3.0)
        assert s.alpha_scale == 0.0 and s.is_deterministic

    def test_parse(self):
        assert Family.parse("nonsingular") is Family.NONSINGULAR
        assert Family.parse("zero-ends") is Family.ZEROENDS
        with pytest.raises(ValueError):
            Family.parse("brownian")

    def test_custom_needs_integer_powers(self):
        assert DiffusionSchedule(Family.CUSTOM, 1.0, n=2, m=-1).powers == (2, -1)
        with pytest.raises(ValueError):
            DiffusionSchedule(Family.CUSTOM, 1.0, n=1.5, m=0)
        with pytest.raises(ValueError):
            DiffusionSchedule(Family.CUSTOM, 1.0)
        with pytest.raises(ValueError):
            DiffusionSchedule(Family.NONSINGULAR, 1.0, n=2, m=2)

    def test_negative_alpha(self):
        with pytest.raises(ValueError):
            DiffusionSchedule(Family.CONSTANT, -0.1)

    def test_default_start(self):
        assert DiffusionSchedule(Family.SINGULAR).default_t_start == pytest.approx(1 - 1e-3)
        for fam in (Family.CONSTANT, Family.NONSINGULAR, Family.ZEROENDS, Family.DETERMINISTIC):
            assert DiffusionSchedule(fam).default_t_start == 1.0

    def test_gamma_schedule(self):
        assert GammaSchedule.constant(0.5)(0.3) == 0.5
        with pytest.raises(ValueError):
            GammaSchedule(lambda t: -1.0)(0.2)
        gs = GammaSchedule.for_target_diffusion(lambda t: 2.0, lambda t: 1.0)
        assert gs(0.4) == pytest.approx(0.25)

    def test_negative_diffusion_rejected(self):
        with pytest.raises(ValueError):
            SdeCoefficients(np.zeros(1), -1.0)


class TestGTilde:
    def test_nonsingular(self):
        assert g_tilde(DiffusionSchedule(Family.NONSINGULAR, 1.0), 0.25) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("alpha", [0.3, 1.0, 2.5])
    def test_zeroends_vanishes(self, alpha):
        s = DiffusionSchedule(Family.ZEROENDS, alpha)
        assert g_tilde(s, 0.0) == 0.0 and g_tilde(s, 1.0) == 0.0

    def test_singular_matches_affine_sde(self):
        s = DiffusionSchedule(Family.SINGULAR, math.sqrt(2))
        assert g_tilde(s, 0.5) == pytest.approx(math.sqrt(2), rel=1e-15)
        assert g_tilde(s, 0.5) == pytest.approx(math.sqrt(2 * 0.5 / 0.5), rel=1e-15)

    def test_rows(self):
        t, a = 0.36, 1.7
        assert g_tilde(DiffusionSchedule(Family.CONSTANT, a), t) == a
        assert g_tilde(DiffusionSchedule(Family.SINGULAR, a), t) == pytest.approx(a * math.sqrt(t / (1 - t)))
        assert g_tilde(DiffusionSchedule(Family.NONSINGULAR, a), t) == pytest.approx(a * math.sqrt(t))
        assert g_tilde(DiffusionSchedule(Family.ZEROENDS, a), t) == pytest.approx(a * math.sqrt(t * (1 - t)))
        assert g_tilde(DiffusionSchedule(Family.DETERMINISTIC), t) == 0.0

    def test_pole(self):
        with pytest.raises(DomainError):
            g_tilde(DiffusionSchedule(Family.SINGULAR, 1.0), 1.0)
        with pytest.raises(DomainError):
            g_tilde(DiffusionSchedule(Family.NONSINGULAR, 1.0), 1.5)

    @given(t=st.floats(0, 1), alpha=st.floats(0, 10), fam=st.sampled_from(CATALOG_FAMILIES))
    def test_nonnegative(self, t, alpha, fam):
        s = DiffusionSchedule(fam, alpha)
        if s.m < 0 and t >= 1:
            return
        assert g_tilde(s, t) >= 0


class TestFamilyCoefficients:
    def test_deterministic(self, rng):
        field = _field()
        s = DiffusionSchedule(Family.DETERMINISTIC)
        for x, t in zip(rng.normal(size=20), rng.uniform(0, 1, 20)):
            c = family_coefficients(field, s, [x], t)
            assert c.diffusion == 0.0
            np.testing.assert_array_equal(c.drift, field.velocity(np.array([x]), t))

    def test_singular_is_affine_sde(self):
        c = family_coefficients(_field(), DiffusionSchedule(Family.SINGULAR, math.sqrt(2)), [1.0], 0.5)
        assert c.drift[0] == pytest.approx(-2.0, abs=1e-14)
        assert c.diffusion == pytest.approx(math.sqrt(2), abs=1e-14)

    def test_nonsingular_toy(self):
        c = family_coefficients(_field(), DiffusionSchedule(Family.NONSINGULAR, 1.0), [0.0], 0.5)
        assert c.drift[0] == pytest.approx(V_MID * 0.75, rel=1e-14)
        assert c.drift[0] == pytest.approx(1.153846, abs=1e-6)
        assert c.diffusion == pytest.approx(math.sqrt(0.5))


class TestFused:
    def test_finite_at_t0(self):
        field = _field()
        out = fused_score_product(field, 1, 0, 1.0, [0.0], 0.0)
        v = field.velocity(np.array([0.0]), 0.0)
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(-v[0] / 1.0, abs=1e-15)

    def test_toy_mid(self):
        out = fused_score_product(_field(), 1, 0, 1.0, [0.0], 0.5)
        assert out[0] == pytest.approx(-0.5 * V_MID, rel=1e-14)
        assert out[0] == pytest.approx(-0.769231, abs=1e-6)

    def test_vanishes_at_t1(self):
        assert fused_score_product(_field(), 1, 1, 2.3, [0.4], 1.0)[0] == 0.0

    def test_poles(self):
        with pytest.raises(DomainError):
            fused_score_product(_field(), 0, 0, 1.0, [0.0], 0.0)
        with pytest.raises(DomainError):
            fused_score_product(_field(), 1, -1, 1.0, [0.0], 1.0)

    def test_equals_t_times_score(self, rng):
        field = _field()
        for x, t in zip(rng.uniform(-3, 3, 1000), rng.uniform(1e-6, 1, 1000)):
            a = fused_score_product(field, 1, 0, 1.0, [x], t)[0]
            b = t * score_from_velocity(field, [x], t)[0]
            assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


class TestScalarTransform:
    def test_identity(self):
        c = marginal_preserving_transform(1.0, 2.0, 0.0, 1.0, 5.0)
        assert (float(c.drift), c.diffusion) == (1.0, 2.0)

    def test_probability_flow(self):
        c = marginal_preserving_transform(1.0, 2.0, 0.0, 0.0, 5.0)
        assert (float(c.drift), c.diffusion) == (-9.0, 0.0)

    def test_extra_noise_cancels(self):
        c = marginal_preserving_transform(0.0, 1.0, 1.0, 0.0, 3.0)
        assert (float(c.drift), c.diffusion) == (0.0, 1.0)

    def test_rescale_example(self):
        c = noise_rescaled_coefficients(-2.0, math.sqrt(2), 0.5, -1.5)
        assert float(c.drift) == pytest.approx(-1.25, abs=1e-15)
        assert c.diffusion == pytest.approx(1.0, abs=1e-15)

    def test_negative_gamma(self):
        with pytest.raises(ValueError):
            marginal_preserving_transform(0.0, 1.0, 0.0, -0.5, 1.0)

    @given(f=st.floats(-100, 100), g=st.floats(0, 10), gamma=st.floats(0, 5), s=st.floats(-100, 100))
    def test_reduces_to_rescale(self, f, g, gamma, s):
        a = marginal_preserving_transform(f, g, 0.0, gamma, s)
        b = noise_rescaled_coefficients(f, g, gamma, s)
        assert float(a.drift) == float(b.drift) and a.diffusion == b.diffusion

    @given(f=st.floats(-100, 100), g=st.floats(0, 10), s=st.floats(-100, 100))
    def test_gamma_one_identity_gamma_zero_deterministic(self, f, g, s):
        one = noise_rescaled_coefficients(f, g, 1.0, s)
        assert float(one.drift) == f and one.diffusion == pytest.approx(g, rel=1e-15)
        zero = noise_rescaled_coefficients(f, g, 0.0, s)
        assert zero.diffusion == 0.0
        assert float(zero.drift) == pytest.approx(f - 0.5 * g * g * s, rel=1e-14, abs=1e-12)

    def test_reduces_to_family(self, rng):
        field = _field()
        for i, (x, t) in enumerate(zip(rng.uniform(-3, 3, 400), rng.uniform(1e-3, 1 - 1e-3, 400))):
            s = DiffusionSchedule(STOCHASTIC[i % 4], rng.uniform(0.1, 2.5))
            gt = g_tilde(s, t)
            a = marginal_preserving_transform(field.velocity(np.array([x]), t), 0.0, gt, rng.uniform(0, 3),
                                          score_from_velocity(field, [x], t))
            b = family_coefficients(field, s, [x], t)
            # the two routes round differently; agreement is to a few ulps
            assert abs(a.drift[0] - b.drift[0]) <= 1e-12 * max(1.0, abs(b.drift[0]))
            assert a.diffusion == pytest.approx(b.diffusion, rel=1e-15)


class TestSingularSde:
    def test_examples(self):
        c = singular_sde_coefficients(1.0, [1.0], 0.5)
        assert c.drift[0] == -2.0 and c.diffusion == pytest.approx(math.sqrt(2), rel=1e-15)
        c = singular_sde_coefficients(1.0, [0.0], 0.0)
        assert c.drift[0] == 0.0 and c.diffusion == 0.0
        c = singular_sde_coefficients(2.0, [1.0], 0.5)
        assert c.drift[0] == -2.0 and c.diffusion == pytest.approx(2 * math.sqrt(2), rel=1e-15)

    def test_pole(self):
        with pytest.raises(DomainError):
            singular_sde_coefficients(1.0, [0.0], 1.0)

    @pytest.mark.parametrize("sigma1", [1.0, 2.0, 0.7])
    def test_family_member_1000_points(self, sigma1, rng):
        field = _field(sigma1 ** 2)
        s = DiffusionSchedule(Family.SINGULAR, math.sqrt(2) * sigma1)
        for x, t in zip(rng.uniform(-3, 3, 1000), rng.uniform(1e-4, 1 - 1e-4, 1000)):
            ref = singular_sde_coefficients(sigma1, [x], t)
            got = family_coefficients(field, s, [x], t)
            assert abs(got.drift[0] - ref.drift[0]) <= 1e-11 * max(1.0, abs(ref.drift[0]))
            assert abs(got.diffusion - ref.diffusion) <= 1e-11 * max(1.0, ref.diffusion)

    def test_family_member_for_mixture_p0(self, mix_field):
        # only the affine structure of the score matters, not the shape of p0
        s = DiffusionSchedule(Family.SINGULAR, math.sqrt(2))
        for x, t in ((0.4, 0.6), (-2.0, 0.1), (3.0, 0.95)):
            ref = singular_sde_coefficients(1.0, [x], t)
            got = family_coefficients(mix_field, s, [x], t)
            assert got.drift[0] == pytest.approx(ref.drift[0], rel=1e-11, abs=1e-11)


class TestReverse:
    def test_zero_diffusion(self):
        fwd = SdeCoefficients(np.array([1.5]), 0.0)
        r = reverse_time_coefficients(fwd, [7.0])
        assert r.drift[0] == 1.5 and r.diffusion == 0.0 and r.time_direction is TimeDirection.REVERSE

    def test_requires_forward(self):
        with pytest.raises(ValueError):
            reverse_time_coefficients(SdeCoefficients(np.zeros(1), 1.0, TimeDirection.REVERSE), [0.0])

    def test_nonsingular_toy(self):
        r = reverse_coefficients(_field(), DiffusionSchedule(Family.NONSINGULAR, 1.0), [0.0], 0.5)
        assert r.drift[0] == pytest.approx(V_MID * 1.25, rel=1e-14)
        assert r.drift[0] == pytest.approx(1.923077, abs=1e-6)

    def test_singular_two_routes(self):
        field = _field()
        s = DiffusionSchedule(Family.SINGULAR, math.sqrt(2))
        fused = reverse_coefficients(field, s, [1.0], 0.5)
        generic = reverse_time_coefficients(singular_sde_coefficients(1.0, [1.0], 0.5),
                                            score_from_velocity(field, [1.0], 0.5))
        assert fused.drift[0] == pytest.approx(generic.drift[0], abs=1e-12)
        # f - g^2 score with f=-2, g^2=2 and score -(1 - (-0.5))/0.325
        assert generic.drift[0] == pytest.approx(-2 + 2 * 1.5 / 0.325, rel=1e-13)

    def test_finite_at_t0(self):
        field = _field()
        for fam in (Family.SINGULAR, Family.NONSINGULAR, Family.ZEROENDS):
            r = reverse_coefficients(field, DiffusionSchedule(fam, 1.0), [0.3], 0.0)
            assert np.isfinite(r.drift[0]) and r.diffusion == 0.0

    def test_all_families_two_routes(self, rng):
        field = _field()
        for i, (x, t) in enumerate(zip(rng.uniform(-3, 3, 400), rng.uniform(1e-3, 1 - 1e-3, 400))):
            s = DiffusionSchedule(STOCHASTIC[i % 4], 1.0)
            fused = reverse_coefficients(field, s, [x], t)
            generic = reverse_time_coefficients(family_coefficients(field, s, [x], t),
                                                score_from_velocity(field, [x], t))
            assert abs(fused.drift[0] - generic.drift[0]) <= 1e-11 * max(1.0, abs(generic.drift[0]))


def test_nonlinear_schedule_rejected_for_score_terms(toy):
    from flowsde.flow import Schedule
    trig = Schedule(lambda t: math.cos(math.pi * t / 2), lambda t: math.sin(math.pi * t / 2))
    field = two_gaussian_field(*toy, schedule=trig)
    with pytest.raises(ValueError):
        family_coefficients(field, DiffusionSchedule(Family.NONSINGULAR), [0.0], 0.5)
    c = family_coefficients(field, DiffusionSchedule(Family.DETERMINISTIC), [0.0], 0.5)
    assert c.diffusion == 0.0


def test_user_velocity_field():
    field = FlowField(1, lambda x, t: 2.0 * np.asarray(x), GaussianEndpoint(0.0, 1.0))
    c = family_coefficients(field, DiffusionSchedule(Family.CONSTANT, 2.0), [1.0], 0.5)
    # v=2, score = (-(0.5)(2) - 1)/0.5 = -4, drift = 2 + 2 * -4
    assert c.drift[0] == pytest.approx(-6.0)
