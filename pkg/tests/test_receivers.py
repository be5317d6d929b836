import numpy as np
import pytest

from deeprx import channel as ch
from deeprx.checks import brute_force_mlsd, mimo_genie_oracle, viterbi_oracle
from deeprx.constellation import QPSK
from deeprx.dataset import BlockLayout, generate_block
from deeprx.receivers import (
    BlackBoxMimoReceiver,
    BlackBoxSisoReceiver,
    DeepSicReceiver,
    TrainingConfig,
    ViterbiNetReceiver,
    genie_map_mimo,
    genie_siso_metrics,
    genie_viterbi,
    initial_state_label,
    load_checkpoint,
    viterbi_detect,
)

TAPS = np.array(ch.DEFAULT_SISO_TAPS)


def siso_block(sigma2, seed=0, pilots=200, info=500):
    spec = ch.SisoChannelSpec(4, ch.StaticProfile(TAPS), sigma2)
    return generate_block(spec, BlockLayout(pilots, info), 0, np.random.default_rng(seed))


def mimo_block(sigma2, H=None, seed=0, pilots=600, info=500, users=4):
    H = ch.exponential_decay_matrix(4, users) if H is None else H
    spec = ch.MimoChannelSpec(users, H.shape[0], ch.StaticProfile(H), sigma2)
    return generate_block(spec, BlockLayout(pilots, info), 0, np.random.default_rng(seed))


def ber(est, truth):
    return float(np.mean(np.asarray(est) != np.asarray(truth)))


def test_viterbi_matches_mlsd_on_random_instances():
    assert viterbi_oracle(60, length=8, memories=(2, 3, 4), seed=5).ok


def test_viterbi_detect_matches_mlsd_with_block_ten():
    rng = np.random.default_rng(1)
    for _ in range(5):
        met = rng.exponential(size=(10, 4))
        np.testing.assert_array_equal(viterbi_detect(met, 2, 2), brute_force_mlsd(met, 2, 2))


def test_genie_noiseless_zero_errors():
    blk = siso_block(1e-6)
    est = genie_viterbi(blk.received, TAPS, 1e-6)
    np.testing.assert_array_equal(est, blk.info_digits)


def test_initial_state_from_pilot_tail():
    # last three pilots s_{-1}=1, s_{-2}=0, s_{-3}=1 (digits); newest first
    assert initial_state_label(np.array([0, 0, 1, 0, 1]), 2, 4) == 1 + 0 * 2 + 1 * 4
    assert initial_state_label(np.array([1]), 2, 1) == 0


def test_genie_metrics_are_scaled_squared_distances():
    m = genie_siso_metrics([0.5], TAPS[:2], 0.25)
    means = np.array([1 + 0.606, -1 + 0.606, 1 - 0.606, -1 - 0.606])
    np.testing.assert_allclose(m[0], (0.5 - means) ** 2 / 0.5)


def test_genie_mimo_cross_check_and_edge_cases():
    assert mimo_genie_oracle(100, seed=3).ok
    blk = mimo_block(1e-8)
    est = genie_map_mimo(blk.received.info_outputs, ch.exponential_decay_matrix(4, 4), 1e-8)
    np.testing.assert_array_equal(est, blk.info_digits)
    # K = N = 1, H = 1: nearest-point slicer
    y = np.array([[0.3 - 0.9j], [-2.0 + 0.1j]])
    est = genie_map_mimo(y, np.eye(1), 0.1)
    pts = QPSK.point_array
    expect = [np.argmin(np.abs(v - pts)) for v in y[:, 0]]
    np.testing.assert_array_equal(est[:, 0], expect)


def test_viterbinet_architecture():
    r = ViterbiNetReceiver(4, np.random.default_rng(0))
    assert r.net.dims == (1, 100, 50, 16)
    assert r.net.activations == ("sigmoid", "relu", "softmax")


def test_untrained_viterbinet_is_near_chance():
    blk = siso_block(0.1, info=4000)
    errs = [ber(ViterbiNetReceiver(4, np.random.default_rng(s)).detect(blk.received), blk.info_digits)
            for s in range(10)]
    assert abs(np.mean(errs) - 0.5) < 0.05


def test_viterbinet_learns_noiseless_channel():
    blk = siso_block(1e-4)
    r = ViterbiNetReceiver(4, np.random.default_rng(0), TrainingConfig(iterations=500))
    r.fit(blk.received.pilot_set(), np.random.default_rng(1))
    assert ber(r.detect(blk.received), blk.info_digits) < 1e-2


def test_viterbinet_beats_chance_at_12db():
    blk = siso_block(ch.snr_to_noise_variance(12.0), info=2000)
    r = ViterbiNetReceiver(4, np.random.default_rng(0))
    r.fit(blk.received.pilot_set(), np.random.default_rng(1))
    assert ber(r.detect(blk.received), blk.info_digits) < 0.5


def test_warm_and_cold_start():
    from deeprx.neural import init_params

    q = siso_block(0.1).received.pilot_set()
    cold = ViterbiNetReceiver(4, np.random.default_rng(0), TrainingConfig(iterations=0, warm_start=False))
    cold.fit(q, np.random.default_rng(1))
    # each fit re-initialises from the next draw of the init stream
    stream = np.random.default_rng(0)
    init_params(cold.net, stream)
    np.testing.assert_array_equal(cold.params[0][0], init_params(cold.net, stream)[0][0])
    warm = ViterbiNetReceiver(4, np.random.default_rng(0), TrainingConfig(iterations=5))
    start = warm.params[0][0].copy()
    warm.fit(q, np.random.default_rng(1))
    after_one = warm.params[0][0].copy()
    assert not np.array_equal(start, after_one)
    warm.fit(q, np.random.default_rng(1))
    # continues from the previous weights: five Adam steps of order lr, not a fresh draw
    assert np.abs(warm.params[0][0] - after_one).max() < 2 * 5 * 1e-3


def test_blackbox_siso_shapes_and_learning():
    blk = siso_block(1e-4)
    r = BlackBoxSisoReceiver(4, np.random.default_rng(0), TrainingConfig(iterations=800, lr=1e-2, batch_size=16))
    assert r.net.dims == (4, 64, 16)
    q = r.pilot_set(blk.received)
    assert q.outputs.shape == (197, 4)
    r.fit(q, np.random.default_rng(1))
    assert ber(r.detect(blk.received), blk.info_digits) < 0.05


def test_blackbox_mimo_shapes():
    r = BlackBoxMimoReceiver(4, 4, np.random.default_rng(0))
    assert r.net.dims == (8, 60, 60, 256)
    blk = mimo_block(0.1, pilots=300, info=20)
    assert r.detect(blk.received).shape == (20, 4)


def test_deepsic_architecture_and_soft_outputs():
    r = DeepSicReceiver(4, 4, np.random.default_rng(0), TrainingConfig(iterations=20))
    assert r.net.dims == (8 + 3 * 4, 60, 30, 4)
    assert r.stages == 5 and len(r.nets()) == 20
    blk = mimo_block(0.1, pilots=300, info=50)
    r.fit(r.pilot_set(blk.received), np.random.default_rng(1))
    hist = r.soft_estimates(blk.received.info_outputs)
    assert len(hist) == 6
    np.testing.assert_allclose(hist[0], 0.25)
    for soft in hist:
        assert soft.shape == (50, 4, 4)
        np.testing.assert_allclose(soft.sum(axis=2), 1.0, atol=1e-12)


def test_deepsic_single_user_stages_idempotent():
    blk = mimo_block(0.05, H=np.array([[1.0]]), pilots=200, info=200, users=1)
    r = DeepSicReceiver(1, 1, np.random.default_rng(0), TrainingConfig(iterations=300), iterations=3)
    assert r.net.dims == (2, 60, 30, 4)
    r.fit(r.pilot_set(blk.received), np.random.default_rng(1))
    hist = r.soft_estimates(blk.received.info_outputs)
    # no interference input, so every stage classifies from y alone
    decisions = [np.argmax(h, axis=2) for h in hist[1:]]
    for d in decisions[1:]:
        assert np.mean(d == decisions[0]) > 0.99
    assert ber(r.detect(blk.received), blk.info_digits) < 0.02


def test_deepsic_diagonal_channel_accuracy():
    blk = mimo_block(1e-3, H=np.eye(4), pilots=600, info=500)
    r = DeepSicReceiver(4, 4, np.random.default_rng(0), TrainingConfig(iterations=500))
    r.fit(r.pilot_set(blk.received), np.random.default_rng(1))
    acc = np.mean(r.detect(blk.received) == blk.info_digits, axis=0)
    assert np.all(acc > 0.99)


def test_detection_is_pure():
    blk = siso_block(0.1)
    r = ViterbiNetReceiver(4, np.random.default_rng(0), TrainingConfig(iterations=20))
    r.fit(blk.received.pilot_set(), np.random.default_rng(1))
    np.testing.assert_array_equal(r.detect(blk.received), r.detect(blk.received))


@pytest.mark.parametrize("make", [
    lambda rng: ViterbiNetReceiver(4, rng, TrainingConfig(iterations=3)),
    lambda rng: BlackBoxSisoReceiver(4, rng, TrainingConfig(iterations=3)),
    lambda rng: BlackBoxMimoReceiver(2, 2, rng, TrainingConfig(iterations=3)),
    lambda rng: DeepSicReceiver(2, 2, rng, TrainingConfig(iterations=3), iterations=2),
])
def test_checkpoint_round_trip(tmp_path, make):
    r = make(np.random.default_rng(0))
    r.save_checkpoint(tmp_path / "r.ckpt")
    text = (tmp_path / "r.ckpt").read_text()
    assert text.startswith(f"receiver kind={r.kind}")
    back = load_checkpoint(tmp_path / "r.ckpt")
    assert type(back) is type(r)
    for (n1, p1), (n2, p2) in zip(r.nets(), back.nets()):
        assert n1 == n2
        for (a, b), (c, d) in zip(p1, p2):
            np.testing.assert_array_equal(a, c)
            np.testing.assert_array_equal(b, d)


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_text("net dims=1,2 acts=softmax\n")
    with pytest.raises(ValueError):
        load_checkpoint(p)
