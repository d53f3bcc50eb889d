"""Mean families, gradients, quasi-score fitting, and prediction."""

import numpy as np
import pytest

from massimpute import (
    ModelFamily,
    build_design_matrix,
    fit_model,
    mean_gradient,
    mean_value,
    predict_all,
    quasi_score,
)
from massimpute.errors import (
    DimensionMismatch,
    OverflowGuardWarning,
    RankDeficient,
    Separation,
)
from massimpute.mean_model import FittedModel, mean_values

from conftest import make_sample_b

FAMILIES = list(ModelFamily)


class TestMeanValue:
    def test_logistic_at_zero(self):
        assert mean_value(ModelFamily.LOGISTIC, [1.0, 2.0], [0.0, 0.0]) == 0.5

    def test_linear_dot_product(self):
        assert mean_value(ModelFamily.LINEAR, [1.0, 2.0], [1.0, 2.0]) == 5.0

    def test_loglinear_at_zero(self):
        assert mean_value(ModelFamily.LOGLINEAR, [3.0], [0.0]) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mean_value(ModelFamily.LINEAR, [1.0, 2.0], [1.0])

    def test_overflow_guard_warns_and_saturates(self):
        with pytest.warns(OverflowGuardWarning):
            value = mean_value(ModelFamily.LOGLINEAR, [1000.0], [1.0])
        assert np.isfinite(value)
        with pytest.warns(OverflowGuardWarning):
            value = mean_value(ModelFamily.LOGISTIC, [-1000.0], [1.0])
        assert 0.0 <= value <= 1.0


class TestMeanGradient:
    def test_linear_is_identity(self):
        np.testing.assert_array_equal(
            mean_gradient(ModelFamily.LINEAR, [1.0, 3.0], [0.5, 0.5]), [1.0, 3.0]
        )

    def test_logistic_at_zero(self):
        np.testing.assert_allclose(
            mean_gradient(ModelFamily.LOGISTIC, [1.0, 0.0], [0.0, 0.0]),
            [0.25, 0.0],
        )

    @pytest.mark.parametrize("family", FAMILIES)
    def test_matches_finite_differences(self, family, rng):
        # central differences at 100 random (x, beta) draws
        eps = 1e-6
        for _ in range(100):
            p = rng.integers(1, 4)
            x = rng.normal(size=p)
            beta = rng.normal(scale=0.5, size=p)
            grad = mean_gradient(family, x, beta)
            for j in range(p):
                step = np.zeros(p)
                step[j] = eps
                fd = (
                    mean_value(family, x, beta + step)
                    - mean_value(family, x, beta - step)
                ) / (2 * eps)
                scale = max(1.0, abs(fd))
                assert abs(grad[j] - fd) / scale <= 1e-6


class TestQuasiScore:
    def test_zero_residuals(self):
        sample = make_sample_b([1.0, 2.0, 3.0], [2.0, 3.0, 4.0])
        dm = build_design_matrix(sample, ("x",), intercept=True)
        score = quasi_score(ModelFamily.LINEAR, sample, dm, np.array([1.0, 1.0]))
        np.testing.assert_allclose(score, [0.0, 0.0], atol=1e-14)

    def test_hand_computation_single_row(self):
        import massimpute.data_model as dmod
        from massimpute import SampleKind, SurveySample

        sample = SurveySample(
            columns={"x1": np.array([1.0]), "x2": np.array([2.0]),
                     "y": np.array([3.0])},
            covariate_names=(),
            kind=SampleKind.NON_PROBABILITY_B,
            response_name="y",
        )
        dm = dmod.DesignMatrix(
            values=np.array([[1.0, 2.0]]),
            column_names=("x1", "x2"),
            intercept_included=False,
        )
        score = quasi_score(ModelFamily.LINEAR, sample, dm, np.zeros(2))
        np.testing.assert_allclose(score, [3.0, 6.0])

    def test_score_small_at_solution(self, rng):
        x = rng.normal(2, 1, size=300)
        eta = -1.0 + 0.8 * x
        y = (rng.uniform(size=300) < 1 / (1 + np.exp(-eta))).astype(float)
        sample = make_sample_b(x, y)
        dm = build_design_matrix(sample, ("x",), intercept=True)
        model = fit_model(ModelFamily.LOGISTIC, sample, dm)
        score = quasi_score(ModelFamily.LOGISTIC, sample, dm, model.beta_hat)
        assert np.max(np.abs(score)) <= 1e-10


class TestFitModel:
    def test_linear_noiseless(self):
        x = np.array([0.0, 1.0, 2.0, 3.0])
        sample = make_sample_b(x, 1.0 + 2.0 * x)
        dm = build_design_matrix(sample, ("x",), intercept=True)
        model = fit_model(ModelFamily.LINEAR, sample, dm)
        np.testing.assert_allclose(model.beta_hat, [1.0, 2.0], atol=1e-10)

    def test_linear_matches_normal_equations(self, rng):
        x = rng.normal(2, 1, size=400)
        y = 1.0 + 2.0 * x + rng.normal(size=400)
        sample = make_sample_b(x, y)
        dm = build_design_matrix(sample, ("x",), intercept=True)
        model = fit_model(ModelFamily.LINEAR, sample, dm)
        X = dm.values
        oracle = np.linalg.lstsq(X, y, rcond=None)[0]
        np.testing.assert_allclose(model.beta_hat, oracle, atol=1e-8)

    def test_logistic_separation(self):
        x = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
        y = (x > 0).astype(float)
        sample = make_sample_b(x, y)
        dm = build_design_matrix(sample, ("x",), intercept=True)
        with pytest.raises(Separation):
            fit_model(ModelFamily.LOGISTIC, sample, dm)

    def test_deterministic(self, rng):
        x = rng.normal(2, 1, size=200)
        y = (rng.uniform(size=200) < 0.4).astype(float)
        sample = make_sample_b(x, y)
        dm = build_design_matrix(sample, ("x",), intercept=True)
        b1 = fit_model(ModelFamily.LOGISTIC, sample, dm).beta_hat
        b2 = fit_model(ModelFamily.LOGISTIC, sample, dm).beta_hat
        assert np.array_equal(b1, b2)

    def test_residuals_orthogonal_to_design(self, rng):
        x = rng.normal(size=100)
        y = 2.0 - x + rng.normal(size=100)
        sample = make_sample_b(x, y)
        dm = build_design_matrix(sample, ("x",), intercept=True)
        model = fit_model(ModelFamily.LINEAR, sample, dm)
        resid = y - dm.values @ model.beta_hat
        # estimating equation itself: sum e_i x_i = 0, and sum e_i = 0 with
        # an intercept present
        assert abs(np.sum(resid)) < 1e-8
        assert abs(np.sum(resid * x)) < 1e-8


class TestPredictAll:
    def test_identity_model(self):
        model = FittedModel(
            family=ModelFamily.LINEAR,
            beta_hat=np.array([0.0, 1.0]),
            covariate_names=("(intercept)", "x"),
            intercept_included=True,
            iterations=1,
            final_score_norm=0.0,
        )
        sample_a = make_sample_b([1.0, 3.0], [0.0, 0.0])
        dm = build_design_matrix(sample_a, ("x",), intercept=True)
        np.testing.assert_allclose(predict_all(model, dm), [1.0, 3.0])

    def test_intercept_only_logistic_is_sample_mean(self, rng):
        y = (rng.uniform(size=50) < 0.3).astype(float)
        sample = make_sample_b(np.zeros(50), y)
        dm = build_design_matrix(sample, (), intercept=True)
        model = fit_model(ModelFamily.LOGISTIC, sample, dm)
        preds = predict_all(model, dm)
        np.testing.assert_allclose(preds, np.mean(y), atol=1e-10)

    @pytest.mark.parametrize("family", FAMILIES)
    def test_invariant_under_linear_recoding(self, family, rng):
        x = rng.normal(2, 1, size=300)
        if family is ModelFamily.LOGISTIC:
            y = (rng.uniform(size=300) < 0.5).astype(float)
        else:
            y = np.abs(1.0 + 0.3 * x + rng.normal(size=300)) + 0.1
        sample = make_sample_b(x, y)
        dm = build_design_matrix(sample, ("x",), intercept=True)
        model = fit_model(family, sample, dm)
        base = predict_all(model, dm)

        # invertible recoding x -> 3x - 1
        sample2 = make_sample_b(3.0 * x - 1.0, y)
        dm2 = build_design_matrix(sample2, ("x",), intercept=True)
        model2 = fit_model(family, sample2, dm2)
        recoded = predict_all(model2, dm2)
        np.testing.assert_allclose(recoded, base, atol=1e-8)


def test_serialization_round_trip(rng):
    x = rng.normal(size=50)
    sample = make_sample_b(x, 0.5 * x + rng.normal(size=50))
    dm = build_design_matrix(sample, ("x",), intercept=True)
    model = fit_model(ModelFamily.LINEAR, sample, dm)
    again = FittedModel.from_json(model.to_json())
    assert again.family == model.family
    np.testing.assert_array_equal(again.beta_hat, model.beta_hat)
    assert again.covariate_names == model.covariate_names
