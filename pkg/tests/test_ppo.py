import math
from dataclasses import replace

import numpy as np
import pytest

from boostctl.checks import brute_force_advantages
from boostctl.converter import BoostConverterEnv, EpisodeSpec, Observation, get_params
from boostctl.errors import ConfigurationError
from boostctl.nn import finite_diff_grad
from boostctl.ppo import (GaussianPolicy, PPOConfig, PPOControl, RolloutBuffer, Transition,
                          actor_loss_and_grads, clipped_surrogate, collect_episode,
                          compute_gae, critic_loss_and_grads, gaussian_log_prob, load_agent,
                          make_agent, nominal_duty, normalize_observation, ppo_update,
                          prob_ratio, save_agent, train)
from boostctl.simulate import ScenarioConfig, run_closed_loop

TINY = PPOConfig(episodes=2, epochs=2, hidden_layers=1, neurons=8, lr_actor=3e-3,
                 lr_critic=3e-3, minibatch_size=16)
DESK = get_params("desk")


def tiny_env(horizon=200):
    return lambda: BoostConverterEnv(DESK, EpisodeSpec(horizon_steps=horizon))


def test_default_config_matches_published_hyperparameters():
    cfg = PPOConfig()
    assert (cfg.episodes, cfg.epochs, cfg.lr_actor, cfg.lr_critic) == (50, 5, 0.05, 0.05)
    assert (cfg.gamma, cfg.clip, cfg.gae_lambda, cfg.minibatch_size) == (0.99, 0.2, 0.98, 8)
    assert cfg.layer_sizes() == [3, 256, 256, 256, 1]


def test_config_validation():
    with pytest.raises(ConfigurationError):
        PPOConfig(clip=1.5)
    with pytest.raises(ConfigurationError):
        PPOConfig(gamma=0.0)


def test_log_prob_at_mean():
    lp = gaussian_log_prob(0.3, 0.3, math.log(0.1))
    assert lp == pytest.approx(-math.log(0.1 * math.sqrt(2 * math.pi)))


def test_ratio_and_surrogate_hand_cases():
    assert prob_ratio(math.log(2.0), 0.0) == pytest.approx(2.0)
    assert clipped_surrogate(2.0, 1.0, 0.2) == 1.2
    assert clipped_surrogate(0.5, -1.0, 0.2) == -0.8
    assert np.isfinite(prob_ratio(1e6, 0.0))


def test_gae_lambda_one_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r, v, boot = rng.normal(size=10), rng.normal(size=10), float(rng.normal())
        adv, ret = compute_gae(r, v, boot, 0.99, 1.0)
        np.testing.assert_allclose(adv, brute_force_advantages(r, v, boot, 0.99),
                                   atol=1e-12, rtol=0)
        np.testing.assert_allclose(ret, adv + v, atol=1e-15)


def test_gae_lambda_zero_is_td_error():
    r, v = np.array([1.0, 2.0]), np.array([0.5, 0.25])
    adv, _ = compute_gae(r, v, 4.0, 0.9, 0.0)
    np.testing.assert_allclose(adv, [1.0 + 0.9 * 0.25 - 0.5, 2.0 + 0.9 * 4.0 - 0.25])


def test_gae_done_cuts_bootstrap():
    adv, _ = compute_gae([1.0], [0.0], 100.0, 0.99, 0.95, dones=[True])
    assert adv[0] == 1.0


def test_gae_length_mismatch():
    from boostctl.errors import DimensionError
    with pytest.raises(DimensionError):
        compute_gae([1.0, 2.0], [0.0], 0.0, 0.99, 0.95)


def test_observation_normalization():
    s = normalize_observation(Observation(24.0, 24.0, 1e4), 48.0, 2e-4)
    np.testing.assert_allclose(s, [0.5, 0.5, 1e4 * 2e-4 / 48.0])


def test_actor_gradient_matches_finite_differences():
    policy, _ = make_agent(TINY)
    rng = np.random.default_rng(1)
    obs = rng.normal(scale=0.3, size=(1, 3))
    action = np.array([policy.sample(obs[0], rng)[0]])
    old = policy.log_prob(obs, action)
    adv = np.array([0.7])
    loss, grads, d_log_std, ratio = actor_loss_and_grads(policy, obs, action, old, adv, 0.2)
    assert ratio[0] == pytest.approx(1.0, abs=1e-12)
    assert loss == pytest.approx(-0.7)

    def surrogate(out):
        mu = policy.action_center + policy.action_scale * out[:, 0]
        lp = gaussian_log_prob(action, mu, policy.log_std)
        return -float(np.mean(clipped_surrogate(prob_ratio(lp, old), adv, 0.2)))

    numeric = finite_diff_grad(policy.actor, surrogate, obs, eps=1e-6)
    assert grads.max_relative_error(numeric, floor=1e-9) < 1e-4
    h = 1e-6
    up, down = policy.copy(), policy.copy()
    up.log_std += h
    down.log_std -= h
    fd = (actor_loss_and_grads(up, obs, action, old, adv, 0.2)[0]
          - actor_loss_and_grads(down, obs, action, old, adv, 0.2)[0]) / (2 * h)
    assert d_log_std == pytest.approx(fd, rel=1e-5)


def test_clipped_branch_has_no_gradient():
    policy, _ = make_agent(TINY)
    obs = np.zeros((1, 3))
    mu = float(policy.mean(obs[0]))
    action = np.array([mu])
    old = policy.log_prob(obs, action) - math.log(2.0)  # ratio 2 with positive advantage
    _, grads, d_ls, ratio = actor_loss_and_grads(policy, obs, action, old, np.array([1.0]), 0.2)
    assert ratio[0] == pytest.approx(2.0)
    assert grads.global_norm() == 0.0 and d_ls == 0.0


def test_critic_regresses_constant_returns():
    _, critic = make_agent(TINY)
    rng = np.random.default_rng(0)
    obs = rng.normal(scale=0.5, size=(64, 3))
    target = np.full(64, 2.5)
    first, _ = critic_loss_and_grads(critic, obs, target)
    for _ in range(3000):
        loss, grads = critic_loss_and_grads(critic, obs, target)
        critic.apply_update(grads, 0.05)
    assert loss < 1e-4 * first
    assert critic(obs)[:, 0] == pytest.approx(target, abs=0.05)


def test_make_agent_is_seeded_and_centered():
    a, ca = make_agent(TINY)
    b, _ = make_agent(TINY)
    assert all(np.array_equal(x, y) for x, y in zip(a.actor.parameters(), b.actor.parameters()))
    assert not np.array_equal(a.actor.weights[0], ca.weights[0])
    assert a.action_center == pytest.approx(0.5) and a.action_scale == pytest.approx(0.45)
    assert a.std == pytest.approx(TINY.init_std)


def test_center_follows_nominal_duty():
    p = get_params("desk")
    # ideal boost duty at the rated input: 24 V -> 60 V needs d = 0.6
    assert nominal_duty(p, 60.0) == pytest.approx(0.6)
    assert nominal_duty(p, 48.0) == pytest.approx(0.5)
    policy, _ = make_agent(TINY, p.duty_min, p.duty_max, nominal_duty(p, 60.0))
    assert policy.action_center == pytest.approx(0.6)
    clipped, _ = make_agent(TINY, p.duty_min, p.duty_max, 0.99)
    assert clipped.action_center == pytest.approx(p.duty_max)


def test_collect_episode_records_full_horizon():
    env = tiny_env(150)()
    policy, critic = make_agent(TINY)
    # a fixed mid duty under soft-start never trips the limits
    steady = GaussianPolicy(policy.actor, math.log(1e-3), 0.5, 0.0)
    buffer, bootstrap, total = collect_episode(env, steady, critic, np.random.default_rng(0),
                                               TINY.soft_start)
    assert len(buffer) == 150
    assert not any(t.done for t in buffer.transitions)
    assert bootstrap != 0.0
    assert total == pytest.approx(sum(t.reward for t in buffer.transitions))


def test_collect_episode_marks_termination():
    policy, critic = make_agent(TINY)
    high = GaussianPolicy(policy.actor, policy.log_std, 0.95, 0.0)
    buffer, bootstrap, _ = collect_episode(tiny_env(5000)(), high, critic,
                                           np.random.default_rng(0), 0.0)
    assert buffer.transitions[-1].done and buffer.transitions[-1].reward == -1.0
    assert bootstrap == 0.0 and len(buffer) < 5000


def test_update_requires_advantages():
    policy, critic = make_agent(TINY)
    buf = RolloutBuffer()
    buf.add(Transition(np.zeros(3), 0.5, 0.0, 1.0, 0.0, False))
    with pytest.raises(ConfigurationError):
        ppo_update(policy, critic, buf, TINY, np.random.default_rng(0))


def test_first_minibatch_ratio_is_one():
    env = tiny_env(64)()
    policy, critic = make_agent(TINY)
    buf, boot, _ = collect_episode(env, policy, critic, np.random.default_rng(0), 0.0)
    buf.compute_advantages(boot, 0.99, 0.98, 0.01, True)
    obs, actions, old, *_ = buf.arrays()
    _, _, _, ratio = actor_loss_and_grads(policy, obs, actions, old, buf.advantages, 0.2)
    assert np.max(np.abs(ratio - 1.0)) <= 1e-12


def test_training_is_deterministic():
    a = train(tiny_env(), TINY)
    b = train(tiny_env(), TINY)
    assert a.reward_curve == b.reward_curve and len(a.reward_curve) == 2
    assert all(s.minibatches > 0 for s in a.stats)


def test_checkpoint_round_trip(tmp_path):
    result = train(tiny_env(), TINY)
    save_agent(tmp_path / "agent", result, {"scenario": ScenarioConfig().to_dict()})
    policy, critic, header = load_agent(tmp_path / "agent")
    assert header["reward_curve"] == result.reward_curve
    assert header["config"]["neurons"] == 8
    obs = np.array([0.9, 0.1, 0.0])
    assert policy.mean(obs) == result.policy.mean(obs)
    assert policy.log_std == result.policy.log_std


def test_policy_control_is_deterministic_and_soft_started():
    policy, _ = make_agent(TINY)
    sc = ScenarioConfig(horizon_steps=100)
    a = run_closed_loop(PPOControl(policy), sc)
    b = run_closed_loop(PPOControl(policy), sc)
    assert np.array_equal(a.v_out, b.v_out)
    assert a.duty[0] == pytest.approx(0.05)


def test_divergence_detection_and_fallback(monkeypatch):
    from boostctl import training
    from boostctl.ppo import UpdateStats

    assert training.divergence_reason(UpdateStats(0.0, 0.0, 1.0, 0.1)) == ""
    assert "ratio" in training.divergence_reason(UpdateStats(0.0, 0.0, 0.01, 1.0))
    assert "non-finite" in training.divergence_reason(UpdateStats(math.nan, 0.0, 1.0, 0.0))
    sc = ScenarioConfig(horizon_steps=100)
    # a huge learning rate leaves the trust region at once; the retry uses the fallback rate
    cfg = replace(TINY, lr_actor=50.0, lr_critic=50.0, max_grad_norm=None)
    result, lr, diverged, reason = training.train_with_fallback(sc, cfg, fallback_lr=1e-3)
    assert diverged and lr == 1e-3 and reason
    assert result.config.lr_actor == 1e-3
