"""Conjugate predictive, student-t density, CRP prior, and class posterior.

The oracles here are written from the closed forms directly, as literal
scalar arithmetic for h=1, so they share no code with the implementation:
the predictive parameters for n = 0, 1, 2 observations, the scalar student-t
density through lgamma, and a two-class posterior assembled by hand.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from namestream import (
    ClassStats,
    ConfigError,
    DataError,
    ModelState,
    NIWHyper,
    NumericalError,
    class_stats_downdate,
    class_stats_update,
    crp_log_weights,
    estimate_hyperparams,
    posterior_over_classes,
    predictive_params,
    studentt_logpdf,
)


def oracle_predictive_1d(points, mu0, s0, kappa, m):
    """Closed-form h=1 predictive (mean, scale, dof) for 0, 1, or 2 points."""
    n = len(points)
    if n == 0:
        return mu0, s0 * (kappa + 1.0) / (kappa * m), m
    xbar = sum(points) / n
    scatter = sum((x - xbar) ** 2 for x in points)
    mean = (n * xbar + kappa * mu0) / (n + kappa)
    dof = n + m  # h = 1
    scale = ((n + kappa + 1.0) / ((n + kappa) * dof)) * (
        s0 + scatter + (n * kappa / (n + kappa)) * (mu0 - xbar) ** 2
    )
    return mean, scale, dof


def oracle_t_logpdf_1d(x, mean, scale, dof):
    """Scalar student-t log density via lgamma, no linear algebra."""
    z2 = (x - mean) ** 2 / scale
    return (
        math.lgamma((dof + 1.0) / 2.0)
        - math.lgamma(dof / 2.0)
        - 0.5 * math.log(dof * math.pi)
        - 0.5 * math.log(scale)
        - ((dof + 1.0) / 2.0) * math.log1p(z2 / dof)
    )


def _hyper_1d(mu0=0.5, s0=2.0, kappa=3.0, m=4.0, alpha=1.0):
    return NIWHyper(
        mu0=np.array([mu0]),
        sigma0=np.array([[s0]]),
        kappa=kappa,
        m=m,
        alpha=alpha,
        h=1,
    )


# ---------------------------------------------------------------------------
# predictive parameters against the closed forms


def test_predictive_empty_class_matches_closed_form_exactly():
    hyper = _hyper_1d(mu0=0.5, s0=2.0, kappa=4.0, m=5.0)
    pp = predictive_params(None, hyper)
    mean, scale, dof = oracle_predictive_1d([], 0.5, 2.0, 4.0, 5.0)
    # the empty-class branch involves no accumulation, so equality is exact
    assert float(pp.mean[0]) == mean
    assert float(pp.scale[0, 0]) == scale
    assert pp.dof == dof


@pytest.mark.parametrize("points", [[1.25], [0.75, -1.5], [2.0, 2.0]])
def test_predictive_small_n_matches_closed_form(points):
    mu0, s0, kappa, m = 0.5, 2.0, 3.0, 4.0
    hyper = _hyper_1d(mu0, s0, kappa, m)
    stats = ClassStats.from_points("c", np.array(points).reshape(-1, 1))
    pp = predictive_params(stats, hyper)
    mean, scale, dof = oracle_predictive_1d(points, mu0, s0, kappa, m)
    assert abs(float(pp.mean[0]) - mean) <= 1e-12
    assert abs(float(pp.scale[0, 0]) - scale) <= 1e-12
    assert pp.dof == dof


def test_predictive_dof_grows_with_n():
    hyper = _hyper_1d(m=6.0)
    stats = ClassStats.from_single("c", np.array([0.0]))
    assert predictive_params(stats, hyper).dof == 7.0
    stats = class_stats_update(stats, np.array([1.0]))
    assert predictive_params(stats, hyper).dof == 8.0


def test_predictive_multivariate_shrinks_toward_prior_mean():
    rng = np.random.default_rng(0)
    hyper = NIWHyper(
        mu0=np.zeros(3), sigma0=np.eye(3), kappa=10.0, m=13.0, alpha=1.0, h=3
    )
    x = rng.standard_normal(3) + 5.0
    stats = ClassStats.from_single("c", x)
    pp = predictive_params(stats, hyper)
    # posterior mean is a convex combination weighted n : kappa
    assert np.allclose(pp.mean, x / 11.0, atol=1e-12)


# ---------------------------------------------------------------------------
# student-t density


def test_studentt_matches_scalar_closed_form():
    pp_args = (0.3, 1.7, 5.0)  # mean, scale, dof
    params_cls = predictive_params(None, _hyper_1d(mu0=0.3, s0=1.7 * 5.0 * 1.0 / 2.0, kappa=1.0, m=5.0))
    # cross-check the construction: scale must came out as 1.7
    assert abs(float(params_cls.scale[0, 0]) - 1.7) < 1e-12
    for x in (-3.0, 0.0, 0.3, 1.0, 12.0):
        got = studentt_logpdf(np.array([x]), params_cls)
        want = oracle_t_logpdf_1d(x, *pp_args)
        # the implementation jitters the scale by ~1e-8 relative, never more
        assert abs(got - want) < 1e-6


def test_studentt_integrates_to_one():
    hyper = _hyper_1d(mu0=-0.7, s0=3.0, kappa=2.0, m=3.0)
    stats = ClassStats.from_points("c", np.array([[0.4], [1.9], [-0.8]]))
    pp = predictive_params(stats, hyper)
    total, err = quad(
        lambda x: math.exp(studentt_logpdf(np.array([x]), pp)),
        -np.inf,
        np.inf,
        limit=200,
    )
    assert abs(total - 1.0) < 1e-4


def test_studentt_high_dof_approaches_gaussian():
    from scipy.stats import multivariate_normal

    from namestream import PredictiveParams

    scale = np.array([[2.0, 0.3], [0.3, 1.0]])
    pp = PredictiveParams(mean=np.array([1.0, -2.0]), scale=scale, dof=1e6)
    gauss = multivariate_normal(mean=pp.mean, cov=scale)
    for x in (pp.mean, np.array([0.5, -1.0]), np.array([3.0, 0.0])):
        assert abs(studentt_logpdf(x, pp) - gauss.logpdf(x)) < 1e-3


def test_studentt_symmetric_about_mean():
    from namestream import PredictiveParams

    # zero mean: x - mean is exact, so reflection flips signs bit-for-bit
    pp = PredictiveParams(
        mean=np.zeros(2), scale=np.array([[2.0, 0.3], [0.3, 1.0]]), dof=3.0
    )
    rng = np.random.default_rng(4)
    for _ in range(50):
        delta = rng.standard_normal(2)
        assert studentt_logpdf(delta, pp) == studentt_logpdf(-delta, pp)
    # around a nonzero mean the subtraction rounds, so equality is only
    # within a few ulps of the log density
    pp = PredictiveParams(
        mean=np.array([1.0, -2.0]), scale=np.array([[2.0, 0.3], [0.3, 1.0]]), dof=3.0
    )
    for _ in range(50):
        delta = rng.standard_normal(2)
        a = studentt_logpdf(pp.mean + delta, pp)
        b = studentt_logpdf(pp.mean - delta, pp)
        assert abs(a - b) < 1e-12


def test_studentt_handles_rank_deficient_scale_via_jitter():
    # a two-point class along one axis leaves the orthogonal direction at
    # zero sample variance; sigma0 keeps the total scale PD, but make it tiny
    pp_singular = type(predictive_params(None, _hyper_1d()))(
        mean=np.zeros(2),
        scale=np.array([[1.0, 1.0], [1.0, 1.0]]),  # rank 1
        dof=5.0,
    )
    val = studentt_logpdf(np.array([0.5, 0.5]), pp_singular)
    assert np.isfinite(val)


def test_studentt_rejects_zero_scale():
    pp_zero = type(predictive_params(None, _hyper_1d()))(
        mean=np.zeros(2), scale=np.zeros((2, 2)), dof=5.0
    )
    with pytest.raises(NumericalError):
        studentt_logpdf(np.zeros(2), pp_zero)


# ---------------------------------------------------------------------------
# streaming statistics


def test_class_stats_update_matches_batch():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 3))
    stats = ClassStats.from_single("c", X[0])
    for x in X[1:]:
        stats = class_stats_update(stats, x)
    batch = ClassStats.from_points("c", X)
    assert stats.n == 40
    assert np.allclose(stats.mean, batch.mean, atol=1e-12)
    assert np.allclose(stats.scatter, batch.scatter, atol=1e-9)


def test_class_stats_downdate_inverts_update():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((5, 2))
    x_extra = rng.standard_normal(2)
    stats = ClassStats.from_points("c", X)
    stats_after = class_stats_downdate(class_stats_update(stats, x_extra), x_extra)
    assert stats_after.n == stats.n
    assert np.allclose(stats_after.mean, stats.mean, atol=1e-12)
    assert np.allclose(stats_after.scatter, stats.scatter, atol=1e-10)


def test_class_stats_downdate_to_empty_returns_none():
    stats = ClassStats.from_single("c", np.array([1.0, 2.0]))
    assert class_stats_downdate(stats, np.array([1.0, 2.0])) is None


def test_class_stats_rejects_nonfinite():
    stats = ClassStats.from_single("c", np.array([0.0]))
    with pytest.raises(DataError):
        class_stats_update(stats, np.array([np.nan]))
    with pytest.raises(DataError):
        class_stats_downdate(stats, np.array([np.inf]))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=2),
        min_size=1,
        max_size=30,
    )
)
def test_class_stats_incremental_equals_batch_property(rows):
    X = np.array(rows)
    stats = ClassStats.from_single("c", X[0])
    for x in X[1:]:
        stats = class_stats_update(stats, x)
    batch = ClassStats.from_points("c", X)
    scale = max(1.0, float(np.abs(X).max()) ** 2 * len(rows))
    assert np.allclose(stats.mean, batch.mean, atol=1e-9 * max(1.0, np.abs(X).max()))
    assert np.allclose(stats.scatter, batch.scatter, atol=1e-9 * scale)


# ---------------------------------------------------------------------------
# CRP prior


def _model_two_classes(alpha, n_a=3, n_b=1):
    hyper = _hyper_1d(alpha=alpha)
    X = np.array([[0.0]] * n_a + [[5.0]] * n_b)
    labels = ["a"] * n_a + ["b"] * n_b
    return ModelState.from_training(X, labels, hyper)


def test_crp_hand_case():
    model = _model_two_classes(alpha=2.0)  # counts 3, 1; denominator 2+4
    labels, logw = crp_log_weights(model)
    assert labels == ["a", "b"]
    assert np.allclose(np.exp(logw), [3 / 6, 1 / 6, 2 / 6], atol=1e-15)


def test_crp_counts_include_online_assignments():
    model = _model_two_classes(alpha=2.0)
    model.classes["a"] = class_stats_update(model.classes["a"], np.array([0.1]))
    model.n_online_seen = 1
    _, logw = crp_log_weights(model)
    assert np.allclose(np.exp(logw), [4 / 7, 1 / 7, 2 / 7], atol=1e-15)


def test_crp_alpha_zero_gives_zero_novel_mass():
    model = _model_two_classes(alpha=0.0)
    _, logw = crp_log_weights(model)
    assert logw[-1] == -np.inf
    assert np.allclose(np.exp(logw[:-1]), [3 / 4, 1 / 4], atol=1e-15)


def test_crp_probabilities_sum_to_one():
    rng = np.random.default_rng(8)
    for _ in range(100):
        k = int(rng.integers(1, 6))
        counts = rng.integers(1, 20, size=k)
        X = np.vstack([np.full((c, 1), float(j)) for j, c in enumerate(counts)])
        labels = [f"c{j}" for j, c in enumerate(counts) for _ in range(c)]
        model = ModelState.from_training(X, labels, _hyper_1d(alpha=float(rng.uniform(0, 50))))
        _, logw = crp_log_weights(model)
        assert abs(np.exp(logw).sum() - 1.0) < 1e-12


def test_crp_rejects_empty_model_with_zero_alpha():
    hyper = _hyper_1d(alpha=0.0)
    model = ModelState(hyper=hyper, classes={}, n_train=0)
    with pytest.raises(ConfigError):
        crp_log_weights(model)


# ---------------------------------------------------------------------------
# posterior over classes


def test_posterior_two_identical_classes_split_mass_exactly():
    # alpha = 0 removes the new-class outcome; two classes with identical
    # statistics must split the mass exactly in half
    hyper = _hyper_1d(alpha=0.0)
    X = np.array([[1.0], [3.0], [1.0], [3.0]])
    labels = ["a", "a", "b", "b"]
    model = ModelState.from_training(X, labels, hyper)
    post = posterior_over_classes(np.array([2.0]), model)
    assert post.labels == ("a", "b")
    assert post.probs[0] == 0.5
    assert post.probs[1] == 0.5
    assert post.novel_mass == 0.0


def test_posterior_matches_hand_assembled_two_class_case():
    mu0, s0, kappa, m, alpha = 0.5, 2.0, 3.0, 4.0, 1.5
    hyper = _hyper_1d(mu0, s0, kappa, m, alpha)
    pts_a, pts_b = [0.0, 0.4], [5.0]
    X = np.array(pts_a + pts_b).reshape(-1, 1)
    model = ModelState.from_training(X, ["a", "a", "b"], hyper)
    x = 1.1

    weights = np.array([2.0, 1.0, alpha]) / (alpha + 3.0)
    dens = np.array(
        [
            math.exp(oracle_t_logpdf_1d(x, *oracle_predictive_1d(pts_a, mu0, s0, kappa, m))),
            math.exp(oracle_t_logpdf_1d(x, *oracle_predictive_1d(pts_b, mu0, s0, kappa, m))),
            math.exp(oracle_t_logpdf_1d(x, *oracle_predictive_1d([], mu0, s0, kappa, m))),
        ]
    )
    expected = weights * dens
    expected /= expected.sum()

    post = posterior_over_classes(np.array([x]), model)
    # 1e-7 headroom for the density's relative-1e-8 scale jitter
    assert np.allclose(post.probs, expected, atol=1e-7)


def test_posterior_sums_to_one_over_random_models():
    rng = np.random.default_rng(12)
    for _ in range(200):
        h = int(rng.integers(1, 5))
        k = int(rng.integers(1, 5))
        n_per = rng.integers(1, 6, size=k)
        X = np.vstack(
            [rng.standard_normal((n, h)) + 3 * rng.standard_normal(h) for n in n_per]
        )
        labels = [f"c{j}" for j, n in enumerate(n_per) for _ in range(n)]
        hyper = estimate_hyperparams(
            X, labels, alpha=float(rng.uniform(0.1, 100)), kappa=float(rng.uniform(0.5, 50)),
            m_offset=float(rng.uniform(1, 50)),
        )
        model = ModelState.from_training(X, labels, hyper)
        post = posterior_over_classes(rng.standard_normal(h), model)
        assert abs(post.probs.sum() - 1.0) < 1e-12
        assert np.all(post.probs >= 0)


def test_posterior_as_dict_places_novel_mass_under_key():
    model = _model_two_classes(alpha=2.0)
    post = posterior_over_classes(np.array([0.2]), model)
    d = post.as_dict("<new>")
    assert set(d) == {"a", "b", "<new>"}
    assert d["<new>"] == post.novel_mass
    assert abs(sum(d.values()) - 1.0) < 1e-12


def test_posterior_invariant_to_training_label_order():
    hyper = _hyper_1d(alpha=2.0)
    X = np.array([[0.0], [5.0], [0.2]])
    m1 = ModelState.from_training(X, ["a", "b", "a"], hyper)
    m2 = ModelState.from_training(X[::-1], ["a", "b", "a"][::-1], hyper)
    p1 = posterior_over_classes(np.array([0.1]), m1)
    p2 = posterior_over_classes(np.array([0.1]), m2)
    assert p1.labels == p2.labels
    assert np.allclose(p1.probs, p2.probs, atol=1e-12)


# ---------------------------------------------------------------------------
# hyperparameter estimation


def test_estimate_hyperparams_pooled_covariance_hand_case():
    X = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, 3.0]])
    labels = ["a", "a", "b", "b"]
    hyper = estimate_hyperparams(X, labels)
    assert np.allclose(hyper.mu0, [0.5, 1.0], atol=1e-15)
    assert np.allclose(hyper.sigma0, np.eye(2), atol=1e-12)
    assert hyper.m == 2.0 + 100.0
    assert hyper.kappa == 100.0
    assert hyper.alpha == 100.0


def test_estimate_hyperparams_fallback_for_degenerate_training():
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    hyper = estimate_hyperparams(X, ["a", "b"])  # no spare records
    assert np.allclose(hyper.sigma0, 1e-6 * np.eye(2), atol=1e-18)


def test_estimate_hyperparams_overrides_and_validation():
    X = np.array([[0.0], [1.0], [0.5]])
    hyper = estimate_hyperparams(X, ["a", "a", "b"], alpha=7.0, kappa=2.0, m_offset=5.0)
    assert hyper.alpha == 7.0
    assert hyper.kappa == 2.0
    assert hyper.m == 6.0
    with pytest.raises(ConfigError):
        estimate_hyperparams(X, ["a", "a", "b"], h=4)
    with pytest.raises(DataError):
        estimate_hyperparams(X, ["a", "a"])


# ---------------------------------------------------------------------------
# hyperparameter container validation


def test_niw_hyper_validation():
    with pytest.raises(ConfigError, match="symmetric"):
        NIWHyper(
            mu0=np.zeros(2),
            sigma0=np.array([[1.0, 0.5], [0.0, 1.0]]),
            kappa=1.0,
            m=3.0,
            alpha=1.0,
            h=2,
        )
    with pytest.raises(ConfigError, match="positive-definite"):
        NIWHyper(
            mu0=np.zeros(2),
            sigma0=np.array([[1.0, 2.0], [2.0, 1.0]]),
            kappa=1.0,
            m=3.0,
            alpha=1.0,
            h=2,
        )
    with pytest.raises(ConfigError, match="kappa"):
        _hyper_1d(kappa=0.0)
    with pytest.raises(ConfigError, match="alpha"):
        _hyper_1d(alpha=-1.0)
    with pytest.raises(ConfigError, match="dof"):
        NIWHyper(mu0=np.zeros(2), sigma0=np.eye(2), kappa=1.0, m=1.0, alpha=1.0, h=2)
    with pytest.raises(ConfigError, match="mu0"):
        NIWHyper(mu0=np.zeros(3), sigma0=np.eye(2), kappa=1.0, m=3.0, alpha=1.0, h=2)


# ---------------------------------------------------------------------------
# model state


def test_novel_label_skips_taken_names():
    model = _model_two_classes(alpha=1.0)
    model.classes["novel-1"] = ClassStats.from_single("novel-1", np.array([9.0]))
    assert model.novel_label() == "novel-2"
    label = model.add_novel(np.array([7.0]))
    assert label == "novel-2"
    assert model.next_novel_index == 3


def test_model_copy_is_deep_for_stats():
    model = _model_two_classes(alpha=1.0)
    clone = model.copy()
    clone.classes["a"] = class_stats_update(clone.classes["a"], np.array([1.0]))
    clone.n_online_seen += 1
    assert model.classes["a"].n == 3
    assert model.n_online_seen == 0
