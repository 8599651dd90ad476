import math

import numpy as np
import pytest

from simrobust.data import (
    AdversaryModel,
    Dataset,
    EpsOutOfRange,
    GroundTruth,
    NoiseModel,
    TooFewSamples,
    corrupt,
    orthogonal_direction,
    sample_clean,
    split_buckets,
    stream_rng,
)
from simrobust.gaussian import gauss_expect
from simrobust.links import builtin_link


def make_truth(d=6, name="gelu", sigma=0.5, kind="gaussian", seed=0, **noise_kw):
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(d)
    beta /= np.linalg.norm(beta)
    return GroundTruth(
        beta_star=beta, link=builtin_link(name), noise=NoiseModel(kind, sigma, **noise_kw)
    )


class TestNoiseModel:
    @pytest.mark.parametrize(
        "kind,kw",
        # pareto shape 9 keeps the eighth moment finite so the empirical
        # fourth moment is sqrt(N)-consistent
        [("gaussian", {}), ("student_t", {"nu": 6.0}), ("scaled_pareto_symmetrized", {"a": 9.0})],
    )
    def test_moments(self, kind, kw):
        sigma = 0.7
        model = NoiseModel(kind, sigma, **kw)
        n = 1_000_000
        draws = model.draw(stream_rng(11, 0x1), n)
        assert abs(draws.mean()) <= 4.0 * sigma / math.sqrt(n)
        assert draws.var() == pytest.approx(sigma**2, rel=0.02)
        assert np.mean(draws**4) == pytest.approx(model.k4**4, rel=0.05)

    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseModel("student_t", 1.0, nu=4.0)
        with pytest.raises(ValueError):
            NoiseModel("scaled_pareto_symmetrized", 1.0, a=3.9)
        with pytest.raises(ValueError):
            NoiseModel("uniform", 1.0)

    def test_zero_sigma(self):
        model = NoiseModel("gaussian", 0.0)
        assert np.all(model.draw(stream_rng(1, 0x1), 100) == 0.0)
        assert model.k4 == 0.0


class TestGroundTruth:
    def test_unit_norm_enforced(self):
        with pytest.raises(ValueError):
            GroundTruth(
                beta_star=np.array([1.0, 1.0]),
                link=builtin_link("square"),
                noise=NoiseModel("gaussian", 0.1),
            )

    def test_sigma_property(self):
        truth = make_truth(sigma=0.3)
        assert truth.sigma == 0.3


class TestSampleClean:
    def test_noiseless_square_is_exact(self):
        truth = make_truth(d=4, name="square", sigma=0.0)
        ds = sample_clean(500, 4, truth, seed=3)
        z = ds.covariates @ truth.beta_star
        assert np.array_equal(ds.responses, z**2)
        assert not ds.corrupted_mask.any()

    def test_gelu_response_mean_matches_quadrature(self):
        # Quadrature oracle for E[f(Z)]; the sample mean of y must agree
        # within Monte-Carlo error since the noise is centred.
        truth = make_truth(d=2, name="gelu", sigma=0.5, seed=5)
        n = 1_000_000
        ds = sample_clean(n, 2, truth, seed=6)
        # E[Z Phi(Z)] = E[phi(Z)] = 1 / (2 sqrt(pi)) by integration by parts.
        oracle = gauss_expect(truth.link.f, 1.0)
        assert oracle == pytest.approx(0.5 / math.sqrt(math.pi), abs=1e-10)
        se = ds.responses.std() / math.sqrt(n)
        assert abs(ds.responses.mean() - oracle) <= 3.0 * se

    def test_covariate_covariance_is_isotropic(self):
        d, n = 8, 200_000
        truth = make_truth(d=d)
        ds = sample_clean(n, d, truth, seed=9)
        cov = ds.covariates.T @ ds.covariates / n
        assert np.linalg.norm(cov - np.eye(d), ord=2) <= 5.0 * math.sqrt(d / n)

    def test_determinism(self):
        truth = make_truth()
        a = sample_clean(1000, 6, truth, seed=42)
        b = sample_clean(1000, 6, truth, seed=42)
        assert np.array_equal(a.covariates, b.covariates)
        assert np.array_equal(a.responses, b.responses)
        c = sample_clean(1000, 6, truth, seed=43)
        assert not np.array_equal(a.responses, c.responses)

    def test_validation(self):
        truth = make_truth(d=6)
        with pytest.raises(ValueError):
            sample_clean(0, 6, truth, seed=1)
        with pytest.raises(ValueError):
            sample_clean(10, 7, truth, seed=1)

    def test_arrays_are_read_only(self):
        ds = sample_clean(50, 6, make_truth(), seed=1)
        with pytest.raises(ValueError):
            ds.covariates[0, 0] = 1.0


class TestCorrupt:
    def test_eps_zero_is_identity(self):
        ds = sample_clean(100, 6, make_truth(), seed=1)
        out = corrupt(ds, 0.0, AdversaryModel("point_mass", magnitude=10.0), seed=2)
        assert out is ds

    def test_none_adversary_is_identity(self):
        ds = sample_clean(100, 6, make_truth(), seed=1)
        out = corrupt(ds, 0.2, AdversaryModel("none"), seed=2)
        assert out is ds

    @pytest.mark.parametrize("kind", ["label_flip", "point_mass", "leverage", "mixed"])
    def test_budget_is_exact(self, kind):
        ds = sample_clean(1003, 6, make_truth(), seed=1)
        eps = 0.1
        out = corrupt(ds, eps, AdversaryModel(kind, magnitude=50.0, direction_seed=5), seed=2)
        assert out.corrupted_count() == math.floor(eps * ds.n)
        assert out.n == ds.n
        untouched = ~out.corrupted_mask
        assert np.array_equal(out.covariates[untouched], ds.covariates[untouched])
        assert np.array_equal(out.responses[untouched], ds.responses[untouched])

    def test_point_mass_rows(self):
        truth = make_truth(d=6)
        ds = sample_clean(400, 6, truth, seed=1)
        adv = AdversaryModel("point_mass", magnitude=100.0, direction_seed=9)
        out = corrupt(ds, 0.1, adv, seed=2)
        v = orthogonal_direction(truth, 9)
        assert abs(v @ truth.beta_star) <= 1e-10
        rows = out.corrupted_mask
        assert np.allclose(out.covariates[rows], 100.0 * v)
        assert np.all(out.responses[rows] == 100.0)
        # Planted mass shifts the response-weighted mean by ~ eps * m^2 * v.
        shift = (out.responses[:, None] * out.covariates).mean(axis=0) - (
            ds.responses[:, None] * ds.covariates
        ).mean(axis=0)
        assert shift @ v == pytest.approx(0.1 * 100.0**2, rel=0.05)

    def test_label_flip_signs(self):
        ds = sample_clean(300, 6, make_truth(name="square", sigma=0.0), seed=1)
        out = corrupt(ds, 0.2, AdversaryModel("label_flip"), seed=2)
        rows = out.corrupted_mask
        assert np.array_equal(out.responses[rows], -ds.responses[rows])
        assert np.array_equal(out.covariates, ds.covariates)

    def test_leverage_rows(self):
        ds = sample_clean(300, 6, make_truth(), seed=1)
        out = corrupt(ds, 0.1, AdversaryModel("leverage", magnitude=7.0), seed=2)
        rows = out.corrupted_mask
        assert np.allclose(out.covariates[rows], 7.0 * ds.covariates[rows])
        assert np.all(out.responses[rows] == 7.0)

    def test_mixed_splits_budget(self):
        truth = make_truth(d=6)
        ds = sample_clean(1000, 6, truth, seed=1)
        out = corrupt(ds, 0.1, AdversaryModel("mixed", magnitude=30.0, direction_seed=3), seed=2)
        rows = np.flatnonzero(out.corrupted_mask)
        v = orthogonal_direction(truth, 3)
        planted = np.isclose(out.covariates[rows], 30.0 * v).all(axis=1)
        assert planted.sum() == 50
        flipped = ~planted
        assert np.array_equal(out.responses[rows[flipped]], -ds.responses[rows[flipped]])

    def test_magnitude_eps_power(self):
        adv = AdversaryModel("point_mass", magnitude=5.0, magnitude_eps_power=0.25)
        assert adv.effective_magnitude(0.01) == pytest.approx(5.0 / 0.01**0.25)
        assert adv.effective_magnitude(0.0) == 5.0
        assert AdversaryModel("point_mass", magnitude=5.0).effective_magnitude(0.01) == 5.0

    def test_eps_out_of_range(self):
        ds = sample_clean(100, 6, make_truth(), seed=1)
        for eps in (-0.1, 0.5, 0.7):
            with pytest.raises(EpsOutOfRange):
                corrupt(ds, eps, AdversaryModel("label_flip"), seed=2)

    def test_requires_truth(self):
        ds = sample_clean(100, 6, make_truth(), seed=1)
        stripped = Dataset(
            covariates=ds.covariates,
            responses=ds.responses,
            corrupted_mask=ds.corrupted_mask,
            truth=None,
            seed=ds.seed,
        )
        with pytest.raises(ValueError):
            corrupt(stripped, 0.1, AdversaryModel("label_flip"), seed=2)

    def test_determinism(self):
        ds = sample_clean(500, 6, make_truth(), seed=1)
        adv = AdversaryModel("point_mass", magnitude=10.0, direction_seed=4)
        a = corrupt(ds, 0.1, adv, seed=7)
        b = corrupt(ds, 0.1, adv, seed=7)
        assert np.array_equal(a.responses, b.responses)
        assert np.array_equal(a.corrupted_mask, b.corrupted_mask)


class TestSplitBuckets:
    def test_equal_disjoint_buckets(self):
        ds = sample_clean(100, 6, make_truth(), seed=1)
        buckets = split_buckets(ds, 4, seed=2)
        assert len(buckets) == 4
        assert all(b.n == 25 for b in buckets)
        stacked = np.vstack([b.covariates for b in buckets])
        assert np.unique(stacked, axis=0).shape[0] == 100

    def test_union_is_original_minus_dropped(self):
        ds = sample_clean(103, 6, make_truth(), seed=1)
        buckets = split_buckets(ds, 4, seed=2)
        assert sum(b.n for b in buckets) == 100
        all_rows = {tuple(r) for r in ds.covariates}
        used = {tuple(r) for b in buckets for r in b.covariates}
        assert used <= all_rows
        assert len(used) == 100

    def test_too_few_samples(self):
        ds = sample_clean(3, 6, make_truth(), seed=1)
        with pytest.raises(TooFewSamples):
            split_buckets(ds, 4, seed=2)
        with pytest.raises(ValueError):
            split_buckets(ds, 1, seed=2)

    def test_mask_and_truth_propagate(self):
        ds = corrupt(
            sample_clean(200, 6, make_truth(), seed=1),
            0.1,
            AdversaryModel("label_flip"),
            seed=2,
        )
        buckets = split_buckets(ds, 4, seed=3)
        assert sum(b.corrupted_count() for b in buckets) == ds.corrupted_count()
        assert all(b.truth is ds.truth for b in buckets)

    def test_determinism(self):
        ds = sample_clean(100, 6, make_truth(), seed=1)
        a = split_buckets(ds, 4, seed=9)
        b = split_buckets(ds, 4, seed=9)
        for x, y in zip(a, b):
            assert np.array_equal(x.covariates, y.covariates)


class TestSerialization:
    def test_npz_round_trip(self, tmp_path):
        ds = corrupt(
            sample_clean(50, 4, make_truth(d=4), seed=1),
            0.1,
            AdversaryModel("label_flip"),
            seed=2,
        )
        path = str(tmp_path / "data.npz")
        ds.to_npz(path)
        back = Dataset.from_npz(path)
        assert np.array_equal(back.covariates, ds.covariates)
        assert np.array_equal(back.responses, ds.responses)
        assert np.array_equal(back.corrupted_mask, ds.corrupted_mask)
        assert back.seed == ds.seed

    def test_csv_round_trip(self, tmp_path):
        import csv

        ds = corrupt(
            sample_clean(20, 3, make_truth(d=3), seed=1),
            0.1,
            AdversaryModel("label_flip"),
            seed=2,
        )
        path = str(tmp_path / "data.csv")
        ds.to_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x_0", "x_1", "x_2", "y", "corrupted"]
        assert len(rows) == 21
        x = np.array([[float(c) for c in r[:3]] for r in rows[1:]])
        y = np.array([float(r[3]) for r in rows[1:]])
        mask = np.array([bool(int(r[4])) for r in rows[1:]])
        assert np.array_equal(x, ds.covariates)
        assert np.array_equal(y, ds.responses)
        assert np.array_equal(mask, ds.corrupted_mask)

    def test_xy_view_hides_provenance(self):
        ds = sample_clean(10, 3, make_truth(d=3), seed=1)
        x, y = ds.xy()
        assert x.shape == (10, 3) and y.shape == (10,)
