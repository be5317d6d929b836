import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deeprx import channel as ch
from deeprx.augment import (
    AugmentConfig,
    AugmentState,
    ClusterModel,
    augment_dynamic,
    augment_static,
    conserving_projection,
    estimate_clusters,
    estimate_covariances,
    estimate_means,
    geometric_sample,
    read_cluster_csv,
    regularize,
    smooth_clusters,
    translate,
    write_cluster_csv,
)
from deeprx.constellation import BPSK, QPSK, class_index, class_symbols, label_rotation
from deeprx.dataset import BlockLayout, LabeledSet, generate_block

TAPS = np.array(ch.DEFAULT_SISO_TAPS)


def siso_q(seed=0, sigma2=0.1, pilots=200, j=0, profile=None):
    spec = ch.SisoChannelSpec(4, profile or ch.StaticProfile(TAPS), sigma2)
    return generate_block(spec, BlockLayout(pilots, 0), j, np.random.default_rng(seed)).received.pilot_set()


def mimo_q(seed=0, sigma2=0.1, pilots=600):
    spec = ch.MimoChannelSpec(4, 4, ch.StaticProfile(ch.exponential_decay_matrix(4, 4)), sigma2)
    return generate_block(spec, BlockLayout(pilots, 0), 0, np.random.default_rng(seed)).received.pilot_set()


def gaussian_model(mean, cov, complex_out=False):
    mean = np.atleast_2d(mean)
    return ClusterModel(mean, np.asarray(cov)[None], np.array([True]), np.array([1]), complex_out)


# ---------------------------------------------------------------------------
# moments


def test_single_sample_mean_and_zero_covariance():
    q = LabeledSet(np.array([[0.7]]), [1], 3)
    means, seen = estimate_means(q)
    assert means[1, 0] == 0.7 and seen.tolist() == [False, True, False]
    np.testing.assert_array_equal(estimate_covariances(q, means)[1], [[0.0]])


def test_noiseless_means_exact():
    q = siso_q(sigma2=1e-30)
    means, seen = estimate_means(q)
    assert seen.all()
    np.testing.assert_allclose(means[:, 0], ch.siso_state_means(TAPS), atol=1e-12)


def test_mean_concentration_monte_carlo():
    sigma2 = 0.2
    q = siso_q(seed=1, sigma2=sigma2, pilots=10_000)
    means, _ = estimate_means(q)
    counts = np.bincount(q.labels, minlength=16)
    err = np.abs(means[:, 0] - ch.siso_state_means(TAPS))
    assert np.all(err <= 4 * np.sqrt(sigma2 / counts))


def test_covariance_monte_carlo_and_symmetry():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3))
    true = a @ a.T + np.eye(3)
    y = rng.multivariate_normal(np.zeros(3), true, 100_000)
    q = LabeledSet(y, np.zeros(len(y), int), 1)
    means, _ = estimate_means(q)
    cov = estimate_covariances(q, means)[0]
    assert np.linalg.norm(cov - true) / np.linalg.norm(true) < 0.02
    np.testing.assert_array_equal(cov, cov.T)


def test_complex_covariance_uses_real_stacking():
    q = mimo_q()
    model = estimate_clusters(q)
    assert model.means.shape == (256, 8) and model.covs.shape == (256, 8, 8)
    assert model.complex_out
    np.testing.assert_allclose(model.complex_means()[:, 0], model.means[:, 0] + 1j * model.means[:, 4])
    assert np.all(model.covs == model.covs.transpose(0, 2, 1))


def test_regularize_makes_positive_definite():
    z = np.zeros((2, 3, 3))
    assert np.all(np.linalg.eigvalsh(regularize(z)) > 0)
    c = np.diag([4.0, 1.0])
    eps = 1e-6 * 2.5 + 1e-9
    np.testing.assert_allclose(regularize(c), c + eps * np.eye(2))


# ---------------------------------------------------------------------------
# geometric


def test_geometric_degenerate_cluster_stays_near_mean():
    model = gaussian_model([0.3, -0.2], np.zeros((2, 2)))
    draws = geometric_sample(model, np.zeros(1000, int), np.random.default_rng(0))
    eps = 1e-9
    assert np.abs(draws - model.means[0]).max() < 6 * np.sqrt(eps)


def test_geometric_moments_monte_carlo():
    n = 100_000
    model = gaussian_model([1.0, -2.0, 0.5], np.diag([0.5, 2.0, 1.0]))
    draws = geometric_sample(model, np.zeros(n, int), np.random.default_rng(1))
    bound = 4 * np.sqrt(2.0) / np.sqrt(n)
    assert np.abs(draws.mean(0) - model.means[0]).max() < bound
    ident = gaussian_model(np.zeros(3), np.eye(3))
    d = geometric_sample(ident, np.zeros(n, int), np.random.default_rng(2))
    assert np.linalg.norm(np.cov(d.T) - np.eye(3)) / np.sqrt(3) < 0.03


def test_geometric_rejects_unset_class():
    model = estimate_clusters(LabeledSet(np.array([[0.1]]), [0], 2))
    with pytest.raises(ValueError):
        geometric_sample(model, 1, np.random.default_rng(0))


def test_geometric_complex_output_round_trip():
    model = estimate_clusters(mimo_q())
    y = geometric_sample(model, [3, 7], np.random.default_rng(0))
    assert y.shape == (2, 4) and np.iscomplexobj(y)


# ---------------------------------------------------------------------------
# projection and translation


def test_projection_identity_phase():
    y = np.array([[0.4], [-1.1]])
    s = np.array([3, 9])
    y2, s2 = conserving_projection(y, s, BPSK, 4, np.random.default_rng(0), steps=0)
    np.testing.assert_array_equal(y2, y)
    np.testing.assert_array_equal(s2, s)


def test_projection_bpsk_pi_negates_output_and_state():
    y = np.array([[0.4]])
    for label in range(16):
        y2, s2 = conserving_projection(y, np.array([label]), BPSK, 4, np.random.default_rng(0), steps=1)
        assert y2[0, 0] == -0.4
        assert s2[0] == class_index(-class_symbols(label, BPSK, 4), BPSK)


@given(st.integers(0, 2**31 - 1))
def test_projection_preserves_norm_and_validity(seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(20, 4)) + 1j * rng.normal(size=(20, 4))
    s = rng.integers(0, 256, 20)
    y2, s2 = conserving_projection(y, s, QPSK, 4, rng)
    np.testing.assert_allclose(np.linalg.norm(y2, axis=1), np.linalg.norm(y, axis=1))
    assert np.all((s2 >= 0) & (s2 < 256))


def test_projection_rotates_labels_with_outputs():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(50, 4)) + 1j * rng.normal(size=(50, 4))
    s = rng.integers(0, 256, 50)
    steps = rng.integers(0, 4, 50)
    y2, s2 = conserving_projection(y, s, QPSK, 4, rng, steps=steps)
    np.testing.assert_allclose(y2, y * np.exp(0.5j * np.pi * steps)[:, None])
    for i in range(50):
        assert s2[i] == label_rotation(QPSK, steps[i], 4)[s[i]]


def test_translation_center_to_center_and_identity():
    model = estimate_clusters(siso_q(sigma2=0.05))
    mu = model.means[:, 0]
    y2, s2 = translate(mu[[2]][:, None], np.array([2]), 9, model, BPSK)
    assert y2[0, 0] == pytest.approx(mu[9]) and s2[0] == 9
    y = np.array([[0.123]])
    y2, _ = translate(y, np.array([5]), 5, model, BPSK)
    assert y2[0, 0] == pytest.approx(0.123)


@given(st.integers(0, 2**31 - 1))
def test_translation_residual_law(seed):
    rng = np.random.default_rng(seed)
    model = estimate_clusters(mimo_q(seed=seed % 7))
    mu = model.complex_means()
    s = rng.integers(0, 256, 10)
    t = rng.integers(0, 256, 10)
    steps = rng.integers(0, 4, 10)
    y = mu[s] + 0.1 * (rng.normal(size=(10, 4)) + 1j * rng.normal(size=(10, 4)))
    y2, s2 = translate(y, s, t, model, QPSK, steps)
    ph = np.exp(0.5j * np.pi * steps)[:, None]
    np.testing.assert_allclose(y2 - mu[t], ph * (y - mu[s]), atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(y2 - mu[t], axis=1), np.linalg.norm(y - mu[s], axis=1))
    np.testing.assert_array_equal(s2, t)


def test_translation_rejects_unset_target():
    model = estimate_clusters(LabeledSet(np.array([[0.1]]), [0], 2))
    with pytest.raises(ValueError):
        translate(np.array([[0.1]]), np.array([0]), 1, model, BPSK)


# ---------------------------------------------------------------------------
# schemes


@pytest.mark.parametrize("kappa,factor", [(3, 10), (2, 7), (0, 1)])
def test_size_law(kappa, factor):
    q = siso_q()
    out = augment_static(q, AugmentConfig(kappa), np.random.default_rng(0), BPSK, 4)
    assert len(out) == factor * len(q)
    np.testing.assert_array_equal(out.outputs[: len(q)], q.outputs)
    np.testing.assert_array_equal(out.labels[: len(q)], q.labels)


@pytest.mark.parametrize("aug", ["geometric", "projection", "translation"])
def test_single_augmentation_size(aug):
    q = siso_q()
    out = augment_static(q, AugmentConfig(9, enabled=(aug,)), np.random.default_rng(0), BPSK, 4)
    assert len(out) == 10 * len(q)
    qm = mimo_q()
    out = augment_static(qm, AugmentConfig(6, enabled=(aug,)), np.random.default_rng(0), QPSK, 4)
    assert len(out) == 7 * len(qm)


@given(st.integers(0, 4), st.integers(0, 2**31 - 1),
       st.sets(st.sampled_from(["geometric", "projection", "translation"]), min_size=1))
def test_outputs_and_labels_valid(kappa, seed, enabled):
    q = siso_q(seed % 5)
    out = augment_static(q, AugmentConfig(kappa, enabled=tuple(enabled)), np.random.default_rng(seed), BPSK, 4)
    assert len(out) == (len(enabled) * kappa + 1) * len(q)
    assert out.outputs.shape[1] == 1 and np.all(np.isfinite(out.outputs))
    assert out.labels.min() >= 0 and out.labels.max() < 16


def test_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(alpha1=1.5)
    with pytest.raises(ValueError):
        AugmentConfig(kappa=1.5)
    with pytest.raises(ValueError):
        AugmentConfig(enabled=("mixup",))
    assert AugmentConfig(enabled=("translation", "geometric")).enabled == ("geometric", "translation")


def test_smoothing_alpha_one_matches_static_estimate():
    prev = estimate_clusters(siso_q(seed=1))
    q = siso_q(seed=2)
    sm = smooth_clusters(q, prev, 1.0, 1.0)
    ref = estimate_clusters(q)
    np.testing.assert_array_equal(sm.means, ref.means)
    np.testing.assert_allclose(sm.covs, ref.covs, rtol=0, atol=1e-15)


def test_smoothing_alpha_zero_keeps_previous():
    prev = estimate_clusters(siso_q(seed=1))
    sm = smooth_clusters(siso_q(seed=2), prev, 0.0, 0.0)
    np.testing.assert_array_equal(sm.means, prev.means)
    np.testing.assert_array_equal(sm.covs, prev.covs)


def test_smoothing_geometric_recursion():
    q = siso_q(seed=3)
    batch, _ = estimate_means(q)
    model = estimate_clusters(siso_q(seed=4, sigma2=1.0))
    start = model.means.copy()
    for j in range(1, 11):
        model = smooth_clusters(q, model, 0.3, 0.3)
        np.testing.assert_allclose(model.means - batch, 0.7**j * (start - batch), atol=1e-12)


@given(st.floats(0.0, 1.0), st.integers(0, 1000))
def test_smoothing_interpolates(alpha, seed):
    prev = estimate_clusters(siso_q(seed=seed % 11))
    q = siso_q(seed=seed % 13 + 20)
    batch, _ = estimate_means(q)
    sm = smooth_clusters(q, prev, alpha, alpha)
    lo = np.minimum(batch, prev.means) - 1e-12
    hi = np.maximum(batch, prev.means) + 1e-12
    assert np.all((sm.means >= lo) & (sm.means <= hi))


def test_smoothing_absent_class_keeps_previous_and_bootstraps_new():
    prev = estimate_clusters(LabeledSet(np.array([[1.0], [2.0]]), [0, 1], 3))
    q = LabeledSet(np.array([[5.0], [7.0]]), [1, 2], 3)
    sm = smooth_clusters(q, prev, 0.3, 0.3)
    assert sm.means[0, 0] == 1.0  # absent now: previous value
    assert sm.means[1, 0] == pytest.approx(0.3 * 5 + 0.7 * 2)
    assert sm.means[2, 0] == 7.0  # first sighting: taken as-is
    assert sm.valid.all()


def test_dynamic_alpha_one_stream_equals_static():
    cfg = AugmentConfig(3, 1.0, 1.0)
    state = AugmentState()
    prof = ch.synthetic_siso_profile()
    for j in range(4):
        q = siso_q(seed=j, j=j, profile=prof)
        dyn, state = augment_dynamic(q, state, cfg, np.random.default_rng(j), BPSK, 4)
        sta = augment_static(q, cfg, np.random.default_rng(j), BPSK, 4)
        np.testing.assert_allclose(dyn.outputs, sta.outputs, atol=1e-12)
        np.testing.assert_array_equal(dyn.labels, sta.labels)


def test_dynamic_replay_and_history_dependence():
    cfg = AugmentConfig(3, 0.3, 0.3)

    def stream(first_seed):
        state, outs = AugmentState(), []
        for j in range(3):
            q = siso_q(seed=first_seed if j == 0 else j)
            out, state = augment_dynamic(q, state, cfg, np.random.default_rng(100 + j), BPSK, 4)
            outs.append(out)
        return outs, state

    a, sa = stream(0)
    b, sb = stream(0)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.outputs, y.outputs)
    _, sc = stream(50)  # only block 0 differs
    assert not np.allclose(sa.model.means, sc.model.means)


def test_translation_with_single_valid_class_falls_back_to_source():
    q = LabeledSet(np.array([[0.5], [0.6]]), [3, 3], 16)
    out = augment_static(q, AugmentConfig(2, enabled=("translation",)), np.random.default_rng(0), BPSK, 4)
    np.testing.assert_array_equal(out.labels, 3)


def test_cluster_csv_round_trip(tmp_path):
    model = estimate_clusters(mimo_q())
    write_cluster_csv(model, tmp_path / "c.csv")
    back = read_cluster_csv(tmp_path / "c.csv", complex_out=True)
    np.testing.assert_array_equal(back.means, model.means)
    np.testing.assert_array_equal(back.covs, model.covs)
    np.testing.assert_array_equal(back.valid, model.valid)
