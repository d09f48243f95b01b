import math

import numpy as np
import pytest
from gradcheck import TOL, fd_relative_error, relu_pattern
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nettwin import nn
from nettwin.ppo import (Agent, PpoConfig, RolloutBuffer, _sample, build_policy_network, clipped_surrogate,
                         frames_to_input, gae, lr_schedule, minibatch_slices, normalize_advantages,
                         ppo_loss_and_grad, ppo_update, split_heads)
from nettwin.world import Action

F64 = np.float64


def brute_force_gae(rewards, values, gamma, lam, dones):
    """A_t = sum_k (gamma*lam)^k delta_{t+k}, stopping after the first terminal transition."""
    n = len(rewards)
    delta = [rewards[t] + (0.0 if dones[t] else gamma * values[t + 1]) - values[t] for t in range(n)]
    adv = []
    for t in range(n):
        total = 0.0
        for k in range(n - t):
            total += (gamma * lam) ** k * delta[t + k]
            if dones[t + k]:
                break
        adv.append(total)
    return np.array(adv)


def test_lr_schedule_examples():
    cfg = PpoConfig()
    assert lr_schedule(0, cfg) == 3e-4
    assert lr_schedule(500_000, cfg) == pytest.approx(1.5e-4, rel=1e-12)
    assert lr_schedule(1_000_000, cfg) == 0.0
    assert lr_schedule(2_000_000, cfg) == 0.0


def test_config_validation():
    for bad in [dict(gamma=0.0), dict(gamma=1.5), dict(lam=-0.1), dict(epsilon=0.0),
                dict(buffer_size=100, batch_size=500), dict(lr_schedule="cosine")]:
        with pytest.raises(ValueError):
            PpoConfig(**bad)


def test_gae_worked_example():
    adv, ret = gae([1.0, 0.0], [0.5, 0.25, 0.0], 0.99, 0.95)
    np.testing.assert_allclose(adv, [0.512375, -0.25], atol=1e-12)
    np.testing.assert_allclose(ret, adv + [0.5, 0.25], atol=1e-12)


def test_gae_zero_inputs_and_lambda_zero():
    adv, _ = gae(np.zeros(5), np.zeros(6), 0.99, 0.95)
    assert not adv.any()
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=8), rng.normal(size=9)
    adv, _ = gae(r, v, 0.9, 0.0)
    np.testing.assert_allclose(adv, r + 0.9 * v[1:] - v[:-1], atol=1e-14)


def test_gae_rejects_length_mismatch():
    with pytest.raises(ValueError):
        gae([1.0, 2.0], [0.0, 0.0], 0.99, 0.95)
    with pytest.raises(ValueError):
        gae([1.0], [0.0, 0.0], 0.99, 0.95, dones=[True, False])


def test_gae_matches_brute_force_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(1, 65))
        r = rng.normal(size=n)
        v = rng.normal(size=n + 1)
        dones = rng.random(n) < 0.1
        gamma, lam = rng.uniform(0.5, 1.0), rng.uniform(0.0, 1.0)
        adv, ret = gae(r, v, gamma, lam, dones)
        np.testing.assert_allclose(adv, brute_force_gae(r, v, gamma, lam, dones), rtol=0, atol=1e-10)
        np.testing.assert_allclose(ret, adv + v[:n], atol=1e-12)


@given(arrays(F64, st.integers(2, 200), elements=st.floats(-1e3, 1e3)))
def test_advantage_normalization(adv):
    out = normalize_advantages(adv)
    if adv.std() < 1e-8:
        assert not out.any()
    else:
        assert abs(out.mean()) < 1e-6
        assert abs(out.std() - 1.0) < 1e-6


def test_advantage_normalization_all_equal():
    assert not normalize_advantages(np.full(10, 3.7)).any()


@given(st.floats(0.0, 5.0), st.floats(-10, 10), st.floats(0.05, 0.5))
def test_clipped_surrogate_min_semantics(ratio, adv, eps):
    obj, active = clipped_surrogate(np.array([ratio]), np.array([adv]), eps)
    unclipped = ratio * adv
    clipped = min(max(ratio, 1 - eps), 1 + eps) * adv
    assert obj[0] <= unclipped and obj[0] <= clipped
    assert obj[0] in (unclipped, clipped)
    assert active[0] == (unclipped <= clipped)


def test_minibatch_layout():
    sizes = [b - a for a, b in minibatch_slices(2048, 500)]
    assert sizes == [500, 500, 500, 500, 48]


def _uniform_agent(seed=0, bias=None):
    agent = Agent(np.random.default_rng(seed))
    last = agent.net.layers[-1]
    last.params["weight"][...] = 0
    last.params["bias"][...] = 0 if bias is None else bias
    return agent


def _frame(seed):
    return np.random.default_rng(seed).integers(0, 256, size=(96, 96, 3), dtype=np.uint8)


def test_uniform_policy_logp_and_entropy():
    agent = _uniform_agent()
    rng = np.random.default_rng(0)
    for k in range(20):
        _, logp, _ = agent.select_action(_frame(k), rng)
        assert logp == pytest.approx(math.log(1 / 9), abs=1e-6)
    obs = frames_to_input(np.stack([_frame(1), _frame(2)]))
    diag = ppo_loss_and_grad(agent.net, obs, np.array([[0, 1], [2, 2]]), np.full(2, math.log(1 / 9)),
                             np.zeros(2), np.zeros(2), PpoConfig())
    assert diag["entropy"] == pytest.approx(math.log(9), abs=1e-6)


def test_categorical_sampling_frequency():
    probs = nn.softmax(np.array([100.0, -100.0, -100.0]))
    rng = np.random.default_rng(0)
    draws = [_sample(probs, rng.random()) for _ in range(10_000)]
    assert draws.count(0) / len(draws) > 0.999
    agent = _uniform_agent(bias=np.array([100, -100, -100, 0, 0, 0, 0], np.float32))
    acts = [agent.select_action(_frame(3), rng)[0] for _ in range(200)]
    assert all(a.translation == -1 for a in acts)
    assert len({a.rotation for a in acts}) == 3


def test_sampler_is_unbiased():
    probs = np.array([0.2, 0.5, 0.3])
    rng = np.random.default_rng(1)
    counts = np.bincount([_sample(probs, rng.random()) for _ in range(20_000)], minlength=3)
    np.testing.assert_allclose(counts / 20_000, probs, atol=0.015)


def test_select_action_deterministic_given_seed():
    agent = Agent(np.random.default_rng(5))
    obs = _frame(9)
    a = agent.select_action(obs, np.random.default_rng(11))
    b = agent.select_action(obs, np.random.default_rng(11))
    assert a == b
    greedy = agent.select_action(obs, np.random.default_rng(0), greedy=True)
    assert greedy == agent.select_action(obs, np.random.default_rng(1), greedy=True)


def _independent_loss(net, obs, actions, old_logp, adv, ret, cfg):
    """Re-derivation of the PPO objective straight from the network output."""
    out = net(obs).astype(F64)
    lt, lr, v = split_heads(out)
    rows = np.arange(len(obs))
    logp_t, logp_r = nn.log_softmax(lt), nn.log_softmax(lr)
    logp = logp_t[rows, actions[:, 0]] + logp_r[rows, actions[:, 1]]
    ent = -(np.exp(logp_t) * logp_t).sum(1) - (np.exp(logp_r) * logp_r).sum(1)
    ratio = np.exp(logp - old_logp)
    obj = np.minimum(ratio * adv, np.clip(ratio, 1 - cfg.epsilon, 1 + cfg.epsilon) * adv)
    loss = np.mean(-obj + cfg.value_coef * 0.5 * (v - ret) ** 2 - cfg.beta * ent)
    active = ratio * adv <= np.clip(ratio, 1 - cfg.epsilon, 1 + cfg.epsilon) * adv
    return float(loss), active


@pytest.mark.parametrize("seed", range(20))
def test_policy_value_head_gradients(seed):
    rng = np.random.default_rng(300 + seed)
    cfg = PpoConfig()
    net = nn.init_params(rng, build_policy_network(cfg, dtype=F64))
    n = 3
    obs = rng.uniform(0, 1, size=(n, 3, 96, 96))
    actions = rng.integers(0, 3, size=(n, 2))
    lt, lr, _ = split_heads(net(obs))
    rows = np.arange(n)
    logp = nn.log_softmax(lt)[rows, actions[:, 0]] + nn.log_softmax(lr)[rows, actions[:, 1]]
    old = logp + rng.normal(0, 0.3, size=n)
    adv, ret = rng.normal(size=n), rng.normal(size=n)
    net.zero_grad()
    diag = ppo_loss_and_grad(net, obs, actions, old, adv, ret, cfg)
    grads = [g.copy() for g in net.gradients()]
    state = {}

    def loss():
        value, state["active"] = _independent_loss(net, obs, actions, old, adv, ret, cfg)
        return value

    assert loss() == pytest.approx(diag["loss"], rel=1e-12)
    relu = relu_pattern(net)

    def pattern():
        return relu() + state["active"].tobytes()

    err = fd_relative_error(loss, net.parameters(), grads, rng, coords_per_param=3, pattern=pattern)
    assert err < TOL, err


def _filled_buffer(agent, capacity, seed=0):
    rng = np.random.default_rng(seed)
    buf = RolloutBuffer(capacity)
    for k in range(capacity):
        obs = _frame(1000 * seed + k)
        action, logp, value = agent.select_action(obs, rng)
        buf.add(obs, action, logp, value, float(rng.random()), k % 7 == 6)
    return buf


def test_buffer_full_semantics():
    agent = Agent(np.random.default_rng(0))
    buf = _filled_buffer(agent, 4)
    assert buf.full
    with pytest.raises(RuntimeError):
        buf.add(_frame(0), Action(0, 0), 0.0, 0.0, 0.0, False)
    buf.clear()
    assert buf.size == 0 and not buf.full
    with pytest.raises(ValueError):
        ppo_update(buf, PpoConfig(batch_size=2, buffer_size=4), agent, np.random.default_rng(0), 1e-4)


def test_fresh_buffer_has_unit_ratio():
    agent = Agent(np.random.default_rng(1))
    buf = _filled_buffer(agent, 8)
    buf.finish(0.0, 0.99, 0.95)
    lt, lr, _ = agent.evaluate(buf.obs)
    rows = np.arange(8)
    logp = (nn.log_softmax(lt.astype(F64))[rows, buf.actions[:, 0]]
            + nn.log_softmax(lr.astype(F64))[rows, buf.actions[:, 1]])
    np.testing.assert_allclose(np.exp(logp - buf.logp), 1.0, atol=1e-5)
    diag = ppo_loss_and_grad(agent.net, frames_to_input(buf.obs), buf.actions, buf.logp, buf.advantages,
                             buf.returns, PpoConfig())
    assert diag["clip_fraction"] == 0.0
    # With ratio 1 the surrogate is the advantage itself.
    assert diag["policy_loss"] == pytest.approx(-buf.advantages.mean(), abs=1e-5)


def test_zero_advantage_has_no_policy_gradient():
    agent = Agent(np.random.default_rng(2))
    buf = _filled_buffer(agent, 4)
    cfg = PpoConfig(beta=0.0, value_coef=0.0)
    agent.net.zero_grad()
    ppo_loss_and_grad(agent.net, frames_to_input(buf.obs), buf.actions, buf.logp, np.zeros(4), np.zeros(4), cfg)
    assert not any(g.any() for g in agent.net.gradients())


def test_single_sample_descent():
    agent = Agent(np.random.default_rng(3))
    cfg = PpoConfig(batch_size=1, buffer_size=1, epochs_per_update=1)
    buf = _filled_buffer(agent, 1)
    buf.advantages[:] = 1.0
    buf.returns[:] = 2.0
    args = (frames_to_input(buf.obs), buf.actions, buf.logp, buf.advantages, buf.returns, cfg)
    before = ppo_loss_and_grad(agent.net, *args)["loss"]
    ppo_update(buf, cfg, agent, np.random.default_rng(0), 1e-5)
    after = ppo_loss_and_grad(agent.net, *args)["loss"]
    assert after < before


def test_buffer_finish_respects_done_flags():
    agent = Agent(np.random.default_rng(4))
    buf = _filled_buffer(agent, 14)
    buf.finish(123.0, 0.99, 0.95)
    vals = np.append(buf.values, 0.0 if buf.dones[-1] else 123.0)
    adv, ret = gae(buf.rewards, vals, 0.99, 0.95, buf.dones)
    np.testing.assert_allclose(buf.returns, ret)
    np.testing.assert_allclose(buf.advantages, normalize_advantages(adv))


def test_ppo_update_is_deterministic():
    def run():
        agent = Agent(np.random.default_rng(6))
        buf = _filled_buffer(agent, 8, seed=2)
        buf.finish(0.0, 0.99, 0.95)
        ppo_update(buf, PpoConfig(batch_size=3, buffer_size=8), agent, np.random.default_rng(1), 3e-4)
        return b"".join(p.tobytes() for p in agent.net.parameters())

    assert run() == run()
