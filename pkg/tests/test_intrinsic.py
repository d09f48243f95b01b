import hashlib
import math

import numpy as np
import pytest
from gradcheck import TOL, fd_relative_error, relu_pattern

from nettwin.intrinsic import (ContrastiveModule, IcmModule, IntrinsicConfig, RndModule, RunningMeanStd, augment,
                               intrinsic_reward_stats, l2_normalize, make_intrinsic, nt_xent, one_hot_actions)
from nettwin.ppo import frames_to_input
from nettwin.world import ALL_ACTIONS, Action

F64 = np.float64


def frame(seed, lo=0, hi=256):
    return np.random.default_rng(seed).integers(lo, hi, size=(96, 96, 3), dtype=np.uint8)


def digest(net):
    return hashlib.sha256(b"".join(p.tobytes() for p in net.parameters())).hexdigest()


def icm(seed=0):
    return IcmModule(IntrinsicConfig(algorithm="icm"), np.random.default_rng(seed))


def rnd(seed=0):
    return RndModule(IntrinsicConfig(algorithm="rnd"), np.random.default_rng(seed))


def contrastive(seed=0, **kw):
    return ContrastiveModule(IntrinsicConfig(algorithm="contrastive", **kw), np.random.default_rng(seed))


def test_config_validation_and_factory():
    with pytest.raises(ValueError):
        IntrinsicConfig(algorithm="count")
    with pytest.raises(ValueError):
        IntrinsicConfig(strength=-1.0)
    for name, cls in [("icm", IcmModule), ("rnd", RndModule), ("contrastive", ContrastiveModule)]:
        assert isinstance(make_intrinsic(IntrinsicConfig(algorithm=name), np.random.default_rng(0)), cls)


def test_one_hot_layout():
    oh = one_hot_actions(np.array([[0, 2], [1, 1]]))
    np.testing.assert_array_equal(oh, [[1, 0, 0, 0, 0, 1], [0, 1, 0, 0, 1, 0]])


# ---------------------------------------------------------------------------
# ICM

def test_icm_reward_zero_when_forward_model_is_exact():
    m = icm()
    s, s2 = frame(1), frame(2)
    # Same batch layout as step(): float32 GEMM results depend on batch shape.
    phi_next = m.encoder(frames_to_input(np.stack([s, s2])))[1]
    last = m.forward_model.layers[-1]
    last.params["weight"][...] = 0
    last.params["bias"][...] = phi_next
    assert m.step(s, Action(1, 0), s2) == 0.0


def test_icm_reward_zero_at_identity_fixed_point():
    m = icm()
    e = m.config.embedding_dim
    first, last = m.forward_model.layers[0], m.forward_model.layers[-1]
    first.params["weight"][...] = 0
    first.params["weight"][:e, :e] = np.eye(e)
    first.params["bias"][...] = 0
    last.params["weight"][...] = np.eye(e)
    last.params["bias"][...] = 0
    s = frame(3)
    for a in (Action(-1, 1), Action(0, 0)):
        assert m.step(s, a, s) == 0.0


def test_icm_forward_loss_halves_on_fixed_transition():
    m = icm(1)
    x = frames_to_input(np.stack([frame(4)]))
    xn = frames_to_input(np.stack([frame(5)]))
    acts = np.array([Action(1, -1).index])

    def fwd():
        phi = m.encoder(np.concatenate([x, xn]))
        return float(m.forward_loss(phi[:1], acts, phi[1:])[0])

    start = fwd()
    for _ in range(100):
        m.update(x, acts, xn)
    assert fwd() <= 0.5 * start


def test_icm_encoder_ignores_forward_loss():
    m = icm(2)
    x = frames_to_input(np.stack([frame(6)]))
    phi = m.encoder(np.concatenate([x, x]))
    m.encoder.zero_grad()
    m.forward_model.zero_grad()
    m.forward_loss(phi[:1], np.array([[0, 0]]), phi[1:], backward=True)
    assert not any(g.any() for g in m.encoder.gradients())
    assert any(g.any() for g in m.forward_model.gradients())


def _f64_icm(seed):
    m = icm(seed)
    m.encoder = m.encoder.astype(F64)
    m.forward_model = m.forward_model.astype(F64)
    m.inverse_model = m.inverse_model.astype(F64)
    return m


@pytest.mark.parametrize("seed", range(20))
def test_icm_forward_loss_gradients(seed):
    m = _f64_icm(seed)
    rng = np.random.default_rng(seed)
    n = 3
    phi_s, phi_n = rng.uniform(0, 1, (n, 128)), rng.uniform(0, 1, (n, 128))
    acts = rng.integers(0, 3, (n, 2))
    m.forward_model.zero_grad()
    m.forward_loss(phi_s, acts, phi_n, backward=True)
    grads = [g.copy() for g in m.forward_model.gradients()]

    def loss():
        return float(m.forward_loss(phi_s, acts, phi_n).mean())

    err = fd_relative_error(loss, m.forward_model.parameters(), grads, rng,
                            pattern=relu_pattern(m.forward_model))
    assert err < TOL, err


@pytest.mark.parametrize("seed", range(20))
def test_icm_inverse_loss_gradients(seed):
    m = _f64_icm(100 + seed)
    rng = np.random.default_rng(seed)
    x, xn = rng.uniform(0, 1, (2, 3, 96, 96)), rng.uniform(0, 1, (2, 3, 96, 96))
    acts = rng.integers(0, 3, (2, 2))
    nets = [m.encoder, m.inverse_model]
    for net in nets:
        net.zero_grad()
    m.inverse_loss(x, acts, xn, backward=True)
    params = [p for net in nets for p in net.parameters()]
    grads = [g.copy() for net in nets for g in net.gradients()]
    err = fd_relative_error(lambda: m.inverse_loss(x, acts, xn), params, grads, rng, coords_per_param=3,
                            pattern=relu_pattern(*nets))
    assert err < TOL, err


def _inverse_task(rng, n):
    """Next frame gains a white block whose grid cell encodes the action."""
    base = rng.integers(0, 64, size=(n, 96, 96, 3), dtype=np.uint8)
    acts = rng.integers(0, 3, size=(n, 2))
    nxt = base.copy()
    for i, (t, r) in enumerate(acts):
        nxt[i, 32 * t:32 * t + 32, 32 * r:32 * r + 32] = 255
    return frames_to_input(base), acts, frames_to_input(nxt)


def _inverse_accuracy(m, x, acts, xn):
    n = len(x)
    phi = m.encoder(np.concatenate([x, xn]))
    logits = m.inverse_model(np.concatenate([phi[:n], phi[n:]], axis=1))
    hit = (logits[:, :3].argmax(1) == acts[:, 0]) & (logits[:, 3:].argmax(1) == acts[:, 1])
    return float(hit.mean())


@pytest.mark.slow
def test_icm_inverse_model_beats_chance():
    m = icm(3)
    rng = np.random.default_rng(5)
    for _ in range(2000):
        m.update(*_inverse_task(rng, 1))
    assert _inverse_accuracy(m, *_inverse_task(np.random.default_rng(99), 300)) >= 3 / 9


# ---------------------------------------------------------------------------
# RND

def test_rnd_predictor_copy_gives_zero_raw_reward():
    m = rnd()
    m.predictor.load_parameters(m.target.parameters())
    assert m.predictor_loss(frames_to_input(frame(1)[None]))[0] == 0.0


def test_rnd_converges_on_fixed_frame():
    m = rnd(1)
    x = frames_to_input(frame(2)[None])
    start = float(m.predictor_loss(x)[0])
    for _ in range(500):
        m.update(x)
    assert float(m.predictor_loss(x)[0]) <= 0.1 * start


@pytest.mark.slow
def test_rnd_target_frozen():
    m = rnd(2)
    before = digest(m.target)
    x = frames_to_input(frame(3)[None])
    for _ in range(10_000):
        m.update(x)
    assert digest(m.target) == before


def test_rnd_rewards_finite_and_nonnegative():
    m = rnd(3)
    rng = np.random.default_rng(0)
    rewards = [m.step(None, None, rng.integers(0, 256, (96, 96, 3), dtype=np.uint8)) for _ in range(1000)]
    assert np.all(np.isfinite(rewards)) and min(rewards) >= 0


def test_rnd_reward_is_scaled_by_running_std():
    m = rnd(4)
    f1, f2 = frame(10), frame(11)
    raw1 = float(m.predictor_loss(frames_to_input(f1[None]))[0])
    assert m.step(None, None, f1) == raw1
    raw2 = float(m.predictor_loss(frames_to_input(f2[None]))[0])
    assert m.step(None, None, f2) == pytest.approx(raw2 / np.std([raw1, raw2]), rel=1e-12)


def test_running_std_matches_two_pass():
    rng = np.random.default_rng(0)
    xs = rng.normal(3.0, 2.0, size=500)
    s = RunningMeanStd()
    for x in xs:
        s.update(float(x))
    assert s.mean == pytest.approx(xs.mean(), rel=1e-12)
    assert s.std == pytest.approx(xs.std(), rel=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_rnd_predictor_gradients(seed):
    m = rnd(200 + seed)
    m.target = m.target.astype(F64)
    m.predictor = m.predictor.astype(F64)
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, (2, 3, 96, 96))
    m.predictor.zero_grad()
    m.predictor_loss(x, backward=True)
    grads = [g.copy() for g in m.predictor.gradients()]
    err = fd_relative_error(lambda: float(m.predictor_loss(x).mean()), m.predictor.parameters(), grads, rng,
                            coords_per_param=3, pattern=relu_pattern(m.predictor))
    assert err < TOL, err


# ---------------------------------------------------------------------------
# Contrastive

def test_nt_xent_hand_value():
    z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    loss, _ = nt_xent(z, 0.5)
    # Each row: positive similarity 1/0.5 = 2, two orthogonal negatives at 0.
    assert loss == pytest.approx(math.log(1.0 + 2.0 * math.exp(-2.0)), rel=1e-12)


def test_nt_xent_rejects_odd_batch():
    with pytest.raises(ValueError):
        nt_xent(np.eye(3), 0.5)


@pytest.mark.parametrize("seed", range(20))
def test_nt_xent_gradients(seed):
    rng = np.random.default_rng(seed)
    b = int(rng.integers(1, 6))
    z = rng.normal(size=(2 * b, 5))
    _, dz = nt_xent(z, 0.5)
    err = fd_relative_error(lambda: nt_xent(z, 0.5)[0], [z], [dz], rng, coords_per_param=10)
    assert err < TOL, err


@pytest.mark.parametrize("seed", range(20))
def test_contrastive_loss_gradients(seed):
    m = contrastive(300 + seed)
    m.net = m.net.astype(F64)
    rng = np.random.default_rng(seed)
    views = rng.uniform(0, 1, (4, 3, 96, 96))
    m.net.zero_grad()
    m.contrastive_loss(views, backward=True)
    grads = [g.copy() for g in m.net.gradients()]
    err = fd_relative_error(lambda: m.contrastive_loss(views), m.net.parameters(), grads, rng,
                            coords_per_param=3, pattern=relu_pattern(m.net))
    assert err < TOL, err


def test_l2_normalize_rows():
    z, norm = l2_normalize(np.array([[3.0, 4.0], [0.0, 2.0]]))
    np.testing.assert_allclose(z, [[0.6, 0.8], [0.0, 1.0]])
    np.testing.assert_allclose(norm[:, 0], [5.0, 2.0])


def test_contrastive_empty_memory_and_repeat():
    m = contrastive(strength=2.0)
    f = frame(1)
    assert m.step(None, None, f) == 2.0
    assert abs(m.step(None, None, f)) <= 1e-6


def test_contrastive_memory_is_bounded_fifo():
    m = contrastive(contrastive_memory=5, contrastive_update_period=10 ** 9)
    for k in range(8):
        m.step(None, None, frame(k, 0, 50))
    assert len(m.memory) == 5
    np.testing.assert_array_equal(m.memory[-1], m.score(frame(7, 0, 50))[1])


def test_contrastive_seen_frame_less_novel_than_noise():
    m = contrastive(1)
    rng = np.random.default_rng(3)
    for k in range(40):
        m.step(None, None, frame(100 + k, 100, 160))
    seen = frame(120, 100, 160)
    noise = rng.integers(0, 256, (96, 96, 3), dtype=np.uint8)
    before = [p.copy() for p in m.net.parameters()]
    r_seen, _ = m.score(seen)
    r_noise, _ = m.score(noise)
    assert r_seen < r_noise
    assert all(np.array_equal(a, b) for a, b in zip(before, m.net.parameters()))


def test_contrastive_updates_every_period():
    m = contrastive(2, contrastive_update_period=4, contrastive_batch=2)
    params = [p.copy() for p in m.net.parameters()]
    for k in range(3):
        m.step(None, None, frame(k))
    assert all(np.array_equal(a, b) for a, b in zip(params, m.net.parameters()))
    m.step(None, None, frame(3))
    assert not all(np.array_equal(a, b) for a, b in zip(params, m.net.parameters()))
    assert math.isfinite(m.last_loss)


def test_augment_shape_range_and_determinism():
    x = frames_to_input(frame(5)[None])[0]
    a = augment(x, np.random.default_rng(0))
    assert a.shape == x.shape and a.dtype == x.dtype
    assert a.min() >= 0 and a.max() <= 1
    np.testing.assert_array_equal(a, augment(x, np.random.default_rng(0)))
    flat = np.full((3, 96, 96), 0.5, np.float32)
    shifted = augment(flat, np.random.default_rng(1))
    assert np.all(np.abs(shifted - 0.5) <= 0.2 + 1e-6)


@pytest.mark.parametrize("name", ["icm", "rnd", "contrastive"])
def test_all_rewards_nonnegative_and_finite(name):
    m = make_intrinsic(IntrinsicConfig(algorithm=name, contrastive_update_period=8, contrastive_batch=4),
                       np.random.default_rng(0))
    rng = np.random.default_rng(1)
    obs = frame(0)
    for k in range(30):
        nxt = rng.integers(0, 256, (96, 96, 3), dtype=np.uint8) if k % 2 else obs
        r = m.step(obs, ALL_ACTIONS[k % 9], nxt)
        assert math.isfinite(r) and r >= 0
        obs = nxt


def test_reward_stats_examples():
    s = intrinsic_reward_stats([1, 1, 1])
    assert s["mean"] == 1 and s["std"] == 0
    s = intrinsic_reward_stats([0, 2])
    assert s["mean"] == 1 and s["std"] == pytest.approx(math.sqrt(2))
    assert (s["min"], s["max"]) == (0, 2)
    assert intrinsic_reward_stats([4.0])["std"] == 0.0
    with pytest.raises(ValueError):
        intrinsic_reward_stats([])
