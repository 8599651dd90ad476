import math

import numpy as np
import pytest

from simrobust.data import AdversaryModel, GroundTruth, NoiseModel, corrupt, sample_clean, split_buckets
from simrobust.links import builtin_link, builtin_names, constants_report
from simrobust.recover import (
    NonFiniteIterate,
    RecoveryConfig,
    baseline_erm,
    distance,
    gradient_points,
    lrgd,
    lrsi,
    recover,
)

CONSTANTS = {}


def constants_for(name, sigma=0.1, k4=None):
    key = (name, sigma, k4)
    if key not in CONSTANTS:
        CONSTANTS[key] = constants_report(builtin_link(name), sigma=sigma, k4=k4)
    return CONSTANTS[key]


def make_truth(d, name, sigma, seed=0, kind="gaussian", **kw):
    rng = np.random.default_rng(seed)
    beta = rng.standard_normal(d)
    beta /= np.linalg.norm(beta)
    return GroundTruth(beta_star=beta, link=builtin_link(name), noise=NoiseModel(kind, sigma, **kw))


class TestDistance:
    def test_trivials(self):
        b = np.array([1.0, 0.0, 0.0])
        assert distance(b, b) == 0.0
        assert distance(-b, b) == 0.0
        assert distance(np.array([0.0, 1.0, 0.0]), b) == pytest.approx(math.sqrt(2.0))

    def test_raw_vs_min(self):
        b = np.array([1.0, 0.0])
        assert np.linalg.norm(-b - b) == pytest.approx(2.0)
        assert distance(-b, b) == 0.0


class TestGradientPoints:
    def test_zero_at_truth_noiseless(self):
        for name in ("square", "gelu", "tanh"):
            truth = make_truth(5, name, 0.0, seed=1)
            ds = sample_clean(200, 5, truth, seed=2)
            rows = gradient_points(ds, truth.beta_star, truth.link)
            assert np.all(rows == 0.0)

    def test_single_row_arithmetic(self):
        truth = GroundTruth(
            beta_star=np.eye(3)[0], link=builtin_link("square"), noise=NoiseModel("gaussian", 0.0)
        )
        from simrobust.data import Dataset

        ds = Dataset(
            covariates=np.eye(3)[:1],
            responses=np.zeros(1),
            corrupted_mask=np.zeros(1, dtype=bool),
            truth=truth,
            seed=0,
        )
        rows = gradient_points(ds, np.eye(3)[0], truth.link)
        # (f(1) - 0) * f'(1) * e1 = 1 * 2 * e1.
        assert np.array_equal(rows, 2.0 * np.eye(3)[:1])

    def test_population_gradient_matches_quadrature(self):
        # Independent oracle: the population gradient lives in span(beta,
        # beta*) and reduces to a two-dimensional Gaussian integral, here
        # evaluated on a tensor Gauss-Hermite grid.
        link = builtin_link("gelu")
        theta = 0.3
        d = 4
        beta_star = np.eye(d)[0]
        beta = math.cos(theta) * np.eye(d)[0] + math.sin(theta) * np.eye(d)[1]

        nodes, weights = np.polynomial.hermite.hermgauss(80)
        z = math.sqrt(2.0) * nodes
        w = weights / math.sqrt(math.pi)
        z1 = z[:, None]
        z2 = z[None, :]
        zb = math.cos(theta) * z1 + math.sin(theta) * z2
        core = (link.f(zb) - link.f(z1)) * link.d1(zb)
        w2 = w[:, None] * w[None, :]
        oracle = np.array(
            [float((core * z1 * w2).sum()), float((core * z2 * w2).sum()), 0.0, 0.0]
        )

        truth = GroundTruth(beta_star=beta_star, link=link, noise=NoiseModel("gaussian", 0.3))
        ds = sample_clean(400_000, d, truth, seed=11)
        rows = gradient_points(ds, beta, link)
        mc = rows.mean(axis=0)
        se = rows.std(axis=0) / math.sqrt(ds.n)
        assert np.all(np.abs(mc - oracle) <= 5.0 * se + 1e-12)


class TestRecoveryConfig:
    def test_eta_default_matches_constants(self):
        rep = constants_for("gelu")
        cfg = RecoveryConfig(constants=rep, eps=0.01)
        assert cfg.resolved_eta() == rep.eta
        assert RecoveryConfig(constants=rep, eps=0.01, eta=0.5).resolved_eta() == 0.5

    def test_p_default_formula(self):
        rep = constants_for("gelu", sigma=0.5)
        cfg = RecoveryConfig(constants=rep, eps=0.01)
        expected = math.ceil(
            (rep.alpha + rep.gamma) / rep.gamma
            * math.log(2.0 * rep.basin_radius / (0.5 * math.sqrt(0.01)))
        )
        assert cfg.resolved_p() == min(max(expected, 1), 50)
        assert RecoveryConfig(constants=rep, eps=0.0).resolved_p() == 50
        assert RecoveryConfig(constants=rep, eps=0.01, P=7).resolved_p() == 7

    def test_filter_defaults_track_bucket_contamination(self):
        rep = constants_for("gelu")
        cfg = RecoveryConfig(constants=rep, eps=0.05)
        assert cfg.resolved_filter_init().eps == pytest.approx(0.1)
        assert cfg.resolved_filter_grad().eps == pytest.approx(0.1)
        tiny = RecoveryConfig(constants=rep, eps=0.0)
        assert tiny.resolved_filter_init().eps == pytest.approx(1e-3)

    def test_eps_validation(self):
        with pytest.raises(ValueError):
            RecoveryConfig(constants=constants_for("gelu"), eps=0.5)


class TestLrsi:
    def test_clean_square(self):
        truth = make_truth(10, "square", 0.1, seed=3)
        ds = sample_clean(100_000, 10, truth, seed=4)
        cfg = RecoveryConfig(constants=constants_for("square"), eps=0.01)
        beta0 = lrsi(ds, cfg)
        assert np.linalg.norm(beta0) == pytest.approx(1.0, abs=1e-9)
        assert distance(beta0, truth.beta_star) <= 0.05

    def test_clean_gelu(self):
        truth = make_truth(10, "gelu", 0.1, seed=5)
        ds = sample_clean(100_000, 10, truth, seed=6)
        cfg = RecoveryConfig(constants=constants_for("gelu"), eps=0.01)
        beta0 = lrsi(ds, cfg)
        assert distance(beta0, truth.beta_star) <= 0.1

    def test_point_mass_filtered(self):
        truth = make_truth(10, "gelu", 0.1, seed=7)
        ds = sample_clean(100_000, 10, truth, seed=8)
        ds = corrupt(ds, 0.05, AdversaryModel("point_mass", magnitude=30.0, direction_seed=9), seed=10)
        cfg = RecoveryConfig(constants=constants_for("gelu"), eps=0.05)
        beta0 = lrsi(ds, cfg)
        assert distance(beta0, truth.beta_star) <= 0.1


class TestLrgd:
    def test_fixed_point_bitwise(self):
        # Noiseless, uncorrupted, started at the truth: every per-row
        # gradient is exactly zero, so the iterates never move.
        for name in builtin_names():
            truth = GroundTruth(
                beta_star=np.eye(5)[0], link=builtin_link(name), noise=NoiseModel("gaussian", 0.0)
            )
            ds = sample_clean(3000, 5, truth, seed=12)
            buckets = split_buckets(ds, 6, seed=13)
            rep = constants_for(name)
            cfg = RecoveryConfig(constants=rep, eps=0.0, P=5)
            out = lrgd(buckets[1:], truth.beta_star, cfg)
            assert np.array_equal(out, truth.beta_star)

    def test_contracts_from_offset_start(self):
        truth = make_truth(8, "gelu", 0.1, seed=14)
        ds = sample_clean(120_000, 8, truth, seed=15)
        buckets = split_buckets(ds, 12, seed=16)
        rep = constants_for("gelu")
        cfg = RecoveryConfig(constants=rep, eps=0.0, P=11)
        start = truth.beta_star + 0.02 * np.eye(8)[1]
        start /= np.linalg.norm(start)
        iterates = []
        out = lrgd(buckets[1:], start, cfg, iterates=iterates)
        assert distance(out, truth.beta_star) < distance(start, truth.beta_star)
        assert len(iterates) == 12

    def test_bucket_count_must_match(self):
        truth = make_truth(5, "gelu", 0.1)
        ds = sample_clean(1000, 5, truth, seed=1)
        buckets = split_buckets(ds, 4, seed=2)
        cfg = RecoveryConfig(constants=constants_for("gelu"), eps=0.0, P=3)
        iterates = []
        lrgd(buckets[1:], truth.beta_star, cfg, iterates=iterates)
        assert len(iterates) == 4


class TestRecover:
    def test_clean_square_end_to_end(self):
        truth = make_truth(10, "square", 0.1, seed=17)
        ds = sample_clean(100_000, 10, truth, seed=18)
        cfg = RecoveryConfig(constants=constants_for("square"), eps=0.0, P=25)
        res = recover(ds, cfg)
        assert np.linalg.norm(res.beta_hat) == pytest.approx(1.0, abs=1e-12)
        assert res.dist_final <= 0.02
        assert len(res.trajectory) == 26
        assert res.dist_final_raw is None  # sign unidentifiable for even links

    def test_clean_matches_baseline_bitwise(self):
        # With no contamination the filters never fire, so the robust
        # pipeline and the plain baseline must agree exactly.
        truth = make_truth(8, "gelu", 0.2, seed=19)
        ds = sample_clean(60_000, 8, truth, seed=20)
        cfg = RecoveryConfig(constants=constants_for("gelu", sigma=0.2), eps=0.0, P=10)
        a = recover(ds, cfg)
        b = baseline_erm(ds, cfg)
        assert np.array_equal(a.beta_hat, b.beta_hat)
        assert a.dist_final == b.dist_final

    def test_asymmetric_link_reports_raw_distance(self):
        truth = make_truth(8, "gelu", 0.2, seed=21)
        ds = sample_clean(40_000, 8, truth, seed=22)
        cfg = RecoveryConfig(constants=constants_for("gelu", sigma=0.2), eps=0.0, P=8)
        res = recover(ds, cfg)
        assert res.dist_final_raw is not None
        # Sign resolution succeeded, so raw and sign-ambiguous errors agree.
        assert res.dist_final_raw == pytest.approx(res.dist_final, abs=1e-12)

    def test_trajectory_distances_decrease(self):
        truth = make_truth(8, "gelu", 0.2, seed=23)
        ds = sample_clean(60_000, 8, truth, seed=24)
        cfg = RecoveryConfig(constants=constants_for("gelu", sigma=0.2), eps=0.0, P=10)
        res = recover(ds, cfg)
        dists = [p.dist for p in res.trajectory]
        assert dists[-1] <= dists[0] + 1e-9
        assert math.isnan(res.trajectory[-1].grad_norm)

    def test_needs_enough_rows(self):
        truth = make_truth(5, "gelu", 0.1)
        ds = sample_clean(50, 5, truth, seed=1)
        with pytest.raises(ValueError):
            recover(ds, RecoveryConfig(constants=constants_for("gelu"), eps=0.0, P=25))

    def test_point_mass_recovery_beats_baseline(self):
        truth = make_truth(8, "gelu", 0.2, seed=25)
        ds = sample_clean(120_000, 8, truth, seed=26)
        ds = corrupt(ds, 0.05, AdversaryModel("point_mass", magnitude=12.0, direction_seed=27), seed=28)
        cfg = RecoveryConfig(constants=constants_for("gelu", sigma=0.2), eps=0.05, P=11)
        res = recover(ds, cfg)
        base = baseline_erm(ds, cfg)
        assert res.dist_final <= 0.25
        assert base.dist_final > 2.0 * res.dist_final

    def test_result_serialization(self):
        truth = make_truth(6, "gelu", 0.2, seed=29)
        ds = sample_clean(20_000, 6, truth, seed=30)
        cfg = RecoveryConfig(constants=constants_for("gelu", sigma=0.2), eps=0.0, P=5)
        res = recover(ds, cfg)
        blob = res.to_dict()
        assert len(blob["beta_hat"]) == 6
        assert len(blob["trajectory"]) == 6
        csv_text = res.trajectory_csv()
        assert csv_text.splitlines()[0] == "iteration,grad_norm,dist"
        assert len(csv_text.splitlines()) == 7


class TestBaselineBreakdown:
    def test_leverage_attack_breaks_baseline(self):
        # High-leverage rows blow up the quadratic link's plain gradient
        # steps; the run must either diverge to non-finite iterates or end
        # order-one wrong.
        truth = make_truth(6, "square", 0.1, seed=31)
        ds = sample_clean(30_000, 6, truth, seed=32)
        ds = corrupt(ds, 0.05, AdversaryModel("leverage", magnitude=1000.0), seed=33)
        cfg = RecoveryConfig(constants=constants_for("square"), eps=0.05, P=5)
        try:
            res = baseline_erm(ds, cfg)
            assert res.dist_final >= 0.5
        except NonFiniteIterate:
            pass
