from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats

from pcsinfer.core_data import SeedSpec
from pcsinfer.errors import BadConfig, KTooLarge
from pcsinfer.simgen import (
    SETTINGS,
    GroundTruth,
    MisspecKind,
    NoiseKind,
    NoiseSpec,
    Rule,
    RuleSet,
    SimConfig,
    assign_active,
    gen_response,
    list_settings,
    make_features,
    simulate,
)


def test_six_settings_in_order():
    assert [name for name, _ in list_settings()] == [
        "gaussian",
        "student_t",
        "block_gaussian",
        "heteroskedastic",
        "drop_active",
        "rule_response",
    ]


@pytest.mark.parametrize("p_base, p, s", [(10, 55, 7), (4, 10, 3), (22, 253, 15)])
def test_dimensions(p_base, p, s):
    config = SimConfig.from_setting("gaussian", n=50, p_base=p_base)
    assert config.p == p
    assert config.s == s


def test_features_are_standardized_with_interactions():
    data = make_features(80, 4, SeedSpec(1))
    assert data.p == 10
    assert data.feature_names[:4] == ("x0", "x1", "x2", "x3")
    assert data.feature_names[4] == "x0:x1"
    np.testing.assert_allclose(data.x.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(data.x.std(axis=0, ddof=1), 1.0, atol=1e-10)


def test_active_set_size_and_coefficients():
    truth = assign_active(55, SeedSpec(2))
    assert len(truth.active_set) == 7
    assert np.count_nonzero(truth.beta) == 7
    assert set(np.flatnonzero(truth.beta)) == set(truth.active_set)


def test_simulate_is_a_pure_function_of_config():
    config = SimConfig.from_setting("student_t", n=40, p_base=4, seed=9)
    a, b = simulate(config), simulate(config)
    np.testing.assert_array_equal(a.data.x, b.data.x)
    np.testing.assert_array_equal(a.data.y, b.data.y)
    assert a.truth.active_set == b.truth.active_set
    other = simulate(SimConfig.from_setting("student_t", n=40, p_base=4, seed=10))
    assert not np.array_equal(a.data.y, other.data.y)


@pytest.mark.parametrize("name", list(SETTINGS))
def test_every_setting_simulates(name):
    sim = simulate(SimConfig.from_setting(name, n=60, p_base=5, seed=3))
    assert sim.data.n == 60
    assert np.all(np.isfinite(sim.data.y))
    assert sim.truth.positives()


class TestDropActive:
    def test_removes_k_columns(self):
        config = SimConfig.from_setting("drop_active", n=50, p_base=10, seed=4, misspec_k=3)
        sim = simulate(config)
        assert sim.data.p == config.p - 3
        assert len(sim.truth.removed_active) == 3
        assert len(sim.truth.positives()) == config.s - 3
        assert len(sim.truth.active_set) == config.s

    def test_default_k_is_half_the_active_set(self):
        config = SimConfig.from_setting("drop_active", n=50, p_base=22)
        assert config.s == 15
        assert config.drop_k == 7

    def test_k_too_large(self):
        with pytest.raises(KTooLarge):
            SimConfig.from_setting("drop_active", n=50, p_base=4, misspec_k=4)

    def test_positives_are_fitted_matrix_positions(self):
        sim = simulate(SimConfig.from_setting("drop_active", n=50, p_base=6, seed=1))
        names = sim.data.feature_names
        for pos in sim.truth.positives():
            full_index = sim.truth.feature_names.index(names[pos])
            assert full_index in sim.truth.fitted_visible_set


def test_rule_response_truth_covers_rule_members():
    sim = simulate(SimConfig.from_setting("rule_response", n=80, p_base=6, seed=5))
    assert sim.rules is not None
    members = {j for rule in sim.rules.rules for j in rule.pair}
    assert set(sim.truth.active_set) == members
    assert all(rule.coef == 1.0 for rule in sim.rules.rules)
    assert all(rule.pair[0] != rule.pair[1] for rule in sim.rules.rules)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": NoiseKind.STUDENT_T, "df": 2.0},
        {"kind": NoiseKind.BLOCK_GAUSSIAN, "rho": 1.0},
        {"kind": NoiseKind.BLOCK_GAUSSIAN, "block_size": 0},
        {"kind": NoiseKind.HETEROSKEDASTIC, "c": -1.0},
        {"kind": NoiseKind.GAUSSIAN, "sd": -0.1},
    ],
)
def test_invalid_noise(kwargs):
    with pytest.raises(BadConfig):
        NoiseSpec(**kwargs)


def test_unknown_setting_and_override():
    with pytest.raises(BadConfig):
        SimConfig.from_setting("laplace", n=50, p_base=4)
    with pytest.raises(BadConfig):
        SimConfig.from_setting("gaussian", n=50, p_base=4, colour="red")


def test_heteroskedastic_auto_has_unit_mean_variance():
    config = SimConfig.from_setting("heteroskedastic", n=4000, p_base=4, seed=6)
    sim = simulate(config)
    residual = sim.data.y - sim.data.x @ sim.truth.beta
    assert np.var(residual) == pytest.approx(1.0, abs=0.15)


def test_truth_round_trips_through_dict(small_sim):
    again = GroundTruth.from_dict(small_sim.truth.to_dict())
    assert again.positives() == small_sim.truth.positives()
    with pytest.raises(BadConfig):
        GroundTruth.from_dict({"beta": []})


def test_setting_metadata():
    config = SimConfig.from_setting("drop_active", n=30, p_base=4, seed=2)
    payload = config.to_dict()
    assert payload["setting"] == "drop_active"
    assert payload["misspec"]["kind"] == MisspecKind.DROP_ACTIVE.value
    assert math.isqrt(config.p) == config.s


def test_saturated_rules_add_every_coefficient():
    features = make_features(50, 3, SeedSpec(1))
    low = float(features.x.min()) - 1.0
    rules = RuleSet((Rule((0, 1), (low, low), 2.0), Rule((1, 2), (low, low), 0.5)))
    config = SimConfig.from_setting("rule_response", n=50, p_base=3, seed=4)
    truth = GroundTruth.from_active((0, 1, 2), features.feature_names)
    y = gen_response(features.x, truth, config, rules)
    noise = config.noise.sd * SeedSpec(4).child("noise").rng().standard_normal(50)
    np.testing.assert_allclose(y, 2.5 + noise, rtol=0, atol=1e-12)


def _noise_only(kind, x, seed, **noise_kw):
    """Response under an all-zero coefficient vector, i.e. the noise itself."""
    p = x.shape[1]
    config = SimConfig(n=x.shape[0], p_base=2, noise=NoiseSpec(kind, **noise_kw), seed=seed)
    truth = GroundTruth((), np.zeros(p), tuple(f"z{j}" for j in range(p)), tuple(range(p)), ())
    return gen_response(x, truth, config)


@pytest.fixture(scope="module")
def wide_x():
    return np.random.default_rng(30).standard_normal((100_000, 3))


@pytest.mark.slow
class TestNoiseDistributions:
    @pytest.mark.parametrize("kind", list(NoiseKind))
    def test_centered(self, wide_x, kind):
        eps = _noise_only(kind, wide_x, seed=31)
        # block means are the independent units for block noise
        units = eps.reshape(-1, 25).mean(axis=1) if kind is NoiseKind.BLOCK_GAUSSIAN else eps
        se = units.std(ddof=1) / np.sqrt(units.size)
        assert abs(units.mean()) <= 3 * se

    def test_student_t_has_heavier_tails(self, wide_x):
        t = _noise_only(NoiseKind.STUDENT_T, wide_x, seed=32)
        g = _noise_only(NoiseKind.GAUSSIAN, wide_x, seed=32)
        assert np.isfinite(np.var(t))
        assert stats.kurtosis(t) > stats.kurtosis(g) + 1.0

    def test_block_correlation(self, wide_x):
        eps = _noise_only(NoiseKind.BLOCK_GAUSSIAN, wide_x, seed=33).reshape(-1, 25)
        within = np.corrcoef(eps[:, 0], eps[:, 1])[0, 1]
        across = np.corrcoef(eps[:-1, 24], eps[1:, 0])[0, 1]
        assert within == pytest.approx(0.5, abs=0.05)
        assert abs(across) < 0.06

    def test_heteroskedastic_slope(self):
        x = np.random.default_rng(34).standard_normal((200, 3))
        norms = np.einsum("ij,ij->i", x, x)
        squared = np.stack([_noise_only(NoiseKind.HETEROSKEDASTIC, x, seed=r, c=0.5) for r in range(500)]) ** 2
        slope, _ = np.polyfit(np.tile(norms, 500), squared.ravel(), 1)
        assert slope == pytest.approx(0.5, rel=0.15)
