import math

import numpy as np
import pytest

from loel import (
    Hyperparameters,
    TrainingSet,
    fit,
    grid_predict,
    load_model,
    neg_log_marginal_likelihood,
    predict,
    predict_many,
    save_model,
)
from loel.errors import DimensionMismatchError, NotPositiveDefiniteError

from conftest import oracle_nlml, oracle_predict


def hp2(l1=20.0, l2=20.0, sf2=1.0, sn2=1e-6):
    return Hyperparameters(np.array([l1, l2]), sf2, sn2)


def random_instance(rng, n, sf2=None, sn2=None):
    X = rng.uniform(0, 100, size=(n, 2))
    y = rng.normal(0, 1, size=n)
    ls = rng.uniform(5, 60, size=2)
    sf2 = sf2 if sf2 is not None else rng.uniform(0.2, 5.0)
    sn2 = sn2 if sn2 is not None else rng.uniform(1e-4, 0.1)
    return TrainingSet(X, y), Hyperparameters(ls, sf2, sn2)


class TestFit:
    def test_single_zero_target_gives_zero_alpha(self):
        model = fit(TrainingSet([[1.0, 2.0]], [0.0]), hp2())
        np.testing.assert_array_equal(model.alpha, [0.0])

    def test_alpha_solves_the_system(self, rng):
        ts, hp = random_instance(rng, 3)
        model = fit(ts, hp)
        from loel import build_covariance
        Kn = build_covariance(ts.inputs, ts.inputs, hp) \
            + hp.noise_variance * np.eye(3)
        residual = Kn @ model.alpha - ts.targets
        assert np.linalg.norm(residual) <= 1e-8 * np.linalg.norm(ts.targets)

    def test_duplicate_inputs_zero_noise_raises(self):
        ts = TrainingSet([[1.0, 1.0], [1.0, 1.0]], [0.5, 0.7])
        with pytest.raises(NotPositiveDefiniteError):
            fit(ts, hp2(sn2=0.0))

    def test_duplicate_inputs_with_noise_is_fine(self):
        ts = TrainingSet([[1.0, 1.0], [1.0, 1.0]], [0.5, 0.7])
        model = fit(ts, hp2(sn2=0.1))
        assert model.cholesky_factor.shape == (2, 2)

    def test_near_singular_engages_jitter(self):
        # Two nearly identical inputs with vanishing noise: the plain
        # factorisation fails, the escalating jitter rescues it.
        ts = TrainingSet([[0.0, 0.0], [1e-9, 0.0], [50.0, 50.0]],
                         [1.0, 1.0, -1.0])
        model = fit(ts, hp2(sn2=0.0))
        assert model.jitter > 0.0

    def test_model_is_immutable(self, rng):
        ts, hp = random_instance(rng, 4)
        model = fit(ts, hp)
        with pytest.raises(ValueError):
            model.alpha[0] = 1.0
        with pytest.raises(Exception):
            model.alpha = np.zeros(4)


class TestPredict:
    def test_interpolates_training_data_noiselessly(self, rng):
        X = np.array([[10.0, 10.0], [50.0, 30.0], [80.0, 90.0]])
        y = np.array([0.3, -0.8, 0.5])
        model = fit(TrainingSet(X, y), hp2(sn2=0.0))
        for i in range(3):
            mean, var = predict(model, X[i])
            assert mean == pytest.approx(y[i], abs=1e-8)
            assert var <= 1e-10 * model.hyperparameters.signal_variance

    def test_reverts_to_prior_far_away(self, rng):
        ts, hp = random_instance(rng, 5)
        model = fit(ts, hp)
        mean, var = predict(model, (1e6, 1e6))
        assert mean == pytest.approx(0.0, abs=1e-12)
        assert var == pytest.approx(hp.signal_variance, rel=1e-12)

    def test_matches_dense_inverse_oracle(self, rng):
        ts, hp = random_instance(rng, 4)
        model = fit(ts, hp)
        x_star = rng.uniform(0, 100, size=2)
        mean, var = predict(model, x_star)
        om, ov = oracle_predict(ts.inputs, ts.targets, x_star,
                                hp.length_scales, hp.signal_variance,
                                hp.noise_variance)
        assert mean == pytest.approx(om, rel=1e-8, abs=1e-12)
        assert var == pytest.approx(ov, rel=1e-8, abs=1e-12)

    @pytest.mark.parametrize("kernel", ["matern32", "rbf"])
    @pytest.mark.parametrize("distance", ["l1-scaled", "l2-scaled"])
    def test_posterior_consistency_all_variants(self, rng, kernel, distance):
        for _ in range(25):
            n = int(rng.integers(1, 9))
            ts, hp = random_instance(rng, n)
            model = fit(ts, hp, kernel=kernel, distance=distance)
            x_star = rng.uniform(-20, 120, size=2)
            mean, var = predict(model, x_star)
            om, ov = oracle_predict(ts.inputs, ts.targets, x_star,
                                    hp.length_scales, hp.signal_variance,
                                    hp.noise_variance, kernel, distance)
            assert mean == pytest.approx(om, rel=1e-8, abs=1e-10)
            assert var == pytest.approx(ov, rel=1e-8, abs=1e-10)

    def test_variance_never_exceeds_prior(self, rng):
        for _ in range(50):
            ts, hp = random_instance(rng, int(rng.integers(1, 9)))
            model = fit(ts, hp)
            x_star = rng.uniform(-50, 150, size=2)
            _, var = predict(model, x_star)
            assert var <= hp.signal_variance + 1e-12

    def test_added_observation_never_increases_variance(self, rng):
        for _ in range(20):
            ts, hp = random_instance(rng, 5)
            x_star = rng.uniform(0, 100, size=2)
            _, var_before = predict(fit(ts, hp), x_star)
            extra = rng.uniform(0, 100, size=2)
            ts_more = TrainingSet(np.vstack([ts.inputs, extra]),
                                  np.append(ts.targets, rng.normal()))
            _, var_after = predict(fit(ts_more, hp), x_star)
            assert var_after <= var_before + 1e-10

    def test_dimension_mismatch(self, rng):
        ts, hp = random_instance(rng, 3)
        with pytest.raises(DimensionMismatchError):
            predict(fit(ts, hp), (1.0, 2.0, 3.0))


class TestNlml:
    def test_single_zero_target_closed_form(self):
        hp = hp2(sf2=2.0, sn2=0.5)
        got = neg_log_marginal_likelihood(TrainingSet([[0.0, 0.0]], [0.0]), hp)
        expected = 0.5 * math.log(2.5) + 0.5 * math.log(2.0 * math.pi)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_single_nonzero_target_adds_quadratic_term(self):
        hp = hp2(sf2=2.0, sn2=0.5)
        base = neg_log_marginal_likelihood(TrainingSet([[0.0, 0.0]], [0.0]), hp)
        got = neg_log_marginal_likelihood(TrainingSet([[0.0, 0.0]], [1.5]), hp)
        assert got == pytest.approx(base + 1.5 ** 2 / (2.0 * 2.5), rel=1e-12)

    def test_matches_dense_oracle(self, rng):
        for n in (2, 3, 4, 5, 6):
            ts, hp = random_instance(rng, n)
            got = neg_log_marginal_likelihood(ts, hp)
            expected = oracle_nlml(ts.inputs, ts.targets, hp.length_scales,
                                   hp.signal_variance, hp.noise_variance)
            assert got == pytest.approx(expected, rel=1e-8)

    def test_permutation_invariance(self, rng):
        ts, hp = random_instance(rng, 7)
        base = neg_log_marginal_likelihood(ts, hp)
        perm = rng.permutation(7)
        shuffled = TrainingSet(ts.inputs[perm], ts.targets[perm])
        assert neg_log_marginal_likelihood(shuffled, hp) == pytest.approx(
            base, abs=1e-10)


class TestGridPredict:
    """The exact factored lattice path against the direct path."""

    def _lattice_training(self, rng, nx=5, ny=6):
        xs = np.arange(nx) * 9.0 + 4.0
        ys = np.arange(ny) * 7.0 + 3.0
        pts = np.array([(x, y) for y in ys for x in xs])
        keep = rng.uniform(size=len(pts)) > 0.2      # punch random gaps
        pts = pts[keep]
        y = rng.normal(0, 1, size=len(pts))
        return TrainingSet(pts, y)

    @pytest.mark.parametrize("kernel,distance,ls", [
        ("matern32", "l2-scaled", (17.0, 23.0)),
        # The l1 form is only a valid covariance at sub-spacing length
        # scales; larger ones make predictive variances genuinely negative.
        ("matern32", "l1-scaled", (3.0, 2.5)),
        ("rbf", "l2-scaled", (17.0, 23.0)),
    ])
    def test_lattice_equals_direct(self, rng, kernel, distance, ls):
        ts = self._lattice_training(rng)
        hp = hp2(*ls, sf2=1.3, sn2=1e-4)
        model = fit(ts, hp, kernel=kernel, distance=distance)
        gx = np.linspace(0, 45, 31)
        gy = np.linspace(0, 40, 29)
        m_fast, v_fast = grid_predict(model, gx, gy, method="lattice")
        m_ref, v_ref = grid_predict(model, gx, gy, method="direct")
        np.testing.assert_allclose(m_fast, m_ref, rtol=1e-9, atol=1e-11)
        np.testing.assert_allclose(v_fast, v_ref, rtol=1e-9, atol=1e-11)

    def test_lattice_matches_pointwise_predict(self, rng):
        ts = self._lattice_training(rng, 4, 4)
        model = fit(ts, hp2(12.0, 30.0, sf2=0.8, sn2=1e-5))
        gx = np.array([0.0, 13.0, 31.5])
        gy = np.array([2.0, 17.0])
        mean, var = grid_predict(model, gx, gy, method="lattice")
        for iy, yv in enumerate(gy):
            for ix, xv in enumerate(gx):
                m, v = predict(model, (xv, yv))
                assert mean[iy, ix] == pytest.approx(m, rel=1e-9, abs=1e-13)
                assert var[iy, ix] == pytest.approx(v, rel=1e-9, abs=1e-13)

    def test_auto_falls_back_for_scattered_training(self, rng):
        X = rng.uniform(0, 60, size=(40, 2))       # no lattice structure
        model = fit(TrainingSet(X, rng.normal(size=40)), hp2())
        gx = np.linspace(0, 60, 61)
        gy = np.linspace(0, 60, 61)
        mean, var = grid_predict(model, gx, gy)    # must not raise
        m, v = predict(model, (gx[30], gy[20]))
        assert mean[20, 30] == pytest.approx(m, rel=1e-10)
        assert var[20, 30] == pytest.approx(v, rel=1e-10)


class TestSerialization:
    def test_roundtrip_preserves_predictions(self, rng, tmp_path):
        ts, hp = random_instance(rng, 6)
        model = fit(ts, hp, distance="l2-scaled")
        path = tmp_path / "model.json"
        save_model(model, path, pair=(2, 8))
        loaded = load_model(path)
        assert loaded.distance == "l2-scaled"
        x_star = rng.uniform(0, 100, size=2)
        assert predict(loaded, x_star) == predict(model, x_star)

    def test_pair_identifier_stored(self, rng, tmp_path):
        import json
        ts, hp = random_instance(rng, 3)
        path = tmp_path / "model.json"
        save_model(fit(ts, hp), path, pair=(2, 8))
        doc = json.loads(path.read_text())
        assert doc["pair"] == [2, 8]
        assert doc["distance"] == "l2-scaled"
        assert "cholesky" not in json.dumps(doc).lower()


class TestPredictMany:
    def test_agrees_with_scalar_predict(self, rng):
        ts, hp = random_instance(rng, 5)
        model = fit(ts, hp)
        Xs = rng.uniform(0, 100, size=(7, 2))
        means, varis = predict_many(model, Xs)
        for i in range(7):
            m, v = predict(model, Xs[i])
            assert means[i] == pytest.approx(m, rel=1e-12)
            assert varis[i] == pytest.approx(v, rel=1e-12)
