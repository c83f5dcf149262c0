"""Interpolation, labels, and the three adversarial objectives."""

import numpy as np
import pytest
from scipy import stats

from ssmail import autodiff as ad
from ssmail import discriminator as dsc
from ssmail import envs, nn
from ssmail.autodiff import Tensor

from gradcheck import check_gradients


def make_traj(value, horizon=1, n_agents=1, d=2):
    arr = np.full((horizon, n_agents, d), float(value))
    return envs.Trajectory(arr, arr.copy())


def small_disc(objective="ss_mse", seed=0, state_dim=2, action_dim=2, hidden=16):
    cfg = dsc.DiscConfig(objective=objective, state_dim=state_dim,
                         action_dim=action_dim, hidden=hidden, n_hidden_layers=2)
    return dsc.Discriminator(np.random.default_rng(seed), cfg)


def linear_disc(weight_row, bias=0.0, objective="ss_mse", state_dim=2, action_dim=2):
    """Discriminator computing an exact linear function of [s, a]."""
    cfg = dsc.DiscConfig(objective=objective, state_dim=state_dim, action_dim=action_dim)
    disc = dsc.Discriminator.__new__(dsc.Discriminator)
    disc.cfg = cfg
    p = nn.ParameterSet()
    p.add("W0", np.asarray(weight_row, dtype=np.float64).reshape(-1, 1))
    p.add("b0", np.array([bias]))
    disc.params = p
    return disc


# ---------------------------------------------------------------------------
# interpolate / labels

def test_interpolate_midpoint():
    out = dsc.interpolate(make_traj(0.0), make_traj(2.0), 0.5)
    np.testing.assert_array_equal(out.states, np.full((1, 1, 2), 1.0))


def test_interpolate_endpoints_bit_exact():
    g = envs.yjunction_expert(0, mode=0)
    e = envs.yjunction_expert(1, mode=1)
    at_g = dsc.interpolate(g, e, 0.0)
    at_e = dsc.interpolate(g, e, 1.0)
    assert np.array_equal(at_g.states, g.states)
    assert np.array_equal(at_g.actions, g.actions)
    assert np.array_equal(at_e.states, e.states)
    assert np.array_equal(at_e.actions, e.actions)


def test_interpolate_extrapolates_past_generated():
    out = dsc.interpolate(make_traj(0.0), make_traj(2.0), -1.0)
    np.testing.assert_array_equal(out.states, np.full((1, 1, 2), -2.0))


def test_interpolate_truncates_to_common_horizon():
    out = dsc.interpolate(make_traj(0.0, horizon=5), make_traj(1.0, horizon=3), 0.5)
    assert out.states.shape[0] == 3


def test_interpolate_rejects_mismatched_agents():
    with pytest.raises(ValueError, match="align"):
        dsc.interpolate(make_traj(0.0, n_agents=2), make_traj(1.0, n_agents=3), 0.5)


def test_ss_label_values():
    assert dsc.ss_label(0.5) == 0.5
    assert dsc.ss_label(1.25) == 0.0
    assert dsc.ss_label(-0.5) == -0.5


def test_ss_label_continuity_and_drop():
    grid = np.linspace(-1.0, 1.0, 201)
    np.testing.assert_array_equal(dsc.ss_label(grid), grid)
    assert dsc.ss_label(1.0) == 1.0
    assert dsc.ss_label(1.0 + 1e-9) == 0.0


def test_alpha_sampler_intervals():
    for mode, (lo, hi) in dsc.ALPHA_INTERVALS.items():
        sampler = dsc.AlphaSampler(mode, seed=0)
        draws = sampler.sample(5000)
        assert draws.min() >= lo and draws.max() <= hi
        assert draws.min() < lo + 0.05 * (hi - lo)
        assert draws.max() > hi - 0.05 * (hi - lo)


def test_alpha_sampler_rejects_unknown_mode():
    with pytest.raises(ValueError, match="alpha mode"):
        dsc.AlphaSampler("everything")


# ---------------------------------------------------------------------------
# d_forward

def test_zero_weight_scores():
    disc = small_disc("ss_mse")
    for _, t in disc.params.items():
        t.data[:] = 0.0
    out = dsc.d_forward(disc, np.zeros((4, 2)), np.zeros((4, 2)))
    np.testing.assert_array_equal(out.data, np.zeros((4, 1)))

    disc_bce = small_disc("gail_bce")
    for _, t in disc_bce.params.items():
        t.data[:] = 0.0
    out = dsc.d_forward(disc_bce, np.zeros((4, 2)), np.zeros((4, 2)))
    np.testing.assert_allclose(out.data, 0.5)


def test_forward_batch_shape():
    disc = small_disc()
    out = dsc.d_forward(disc, np.zeros((7, 2)), np.zeros((7, 2)))
    assert out.shape == (7, 1)


def test_forward_gradient_wrt_inputs_and_params():
    disc = small_disc(seed=3, hidden=6)
    rng = np.random.default_rng(4)
    s0 = rng.uniform(-1, 1, (3, 2))
    a0 = rng.uniform(-1, 1, (3, 2))
    names = disc.params.names()
    arrays = [s0, a0] + [disc.params[n].data.copy() for n in names]

    def f(s, a, *weights):
        d2 = dsc.Discriminator.__new__(dsc.Discriminator)
        d2.cfg = disc.cfg
        d2.params = nn.ParameterSet()
        for n, w in zip(names, weights):
            d2.params.add(n, w)
        return ad.mean(ad.square(d2.forward(s, a) + 0.3))

    check_gradients(f, arrays, rel_tol=1e-3)


# ---------------------------------------------------------------------------
# ss_loss

def rows(value, batch=1, dim=2):
    return np.full((batch, dim), float(value))


def test_ss_loss_zero_when_matching_labels():
    # D(s, a) = s[0]; choose inputs whose first coordinate equals the label.
    disc = linear_disc([1.0, 0.0, 0.0, 0.0])
    gen = (rows(0.0), rows(0.0))
    exp = (rows(1.0), rows(0.0))
    interp = [dsc.InterpolatedBatch(0.5, np.full((1, 1, 2), 0.5), np.zeros((1, 1, 2)), 0.5)]
    loss = dsc.ss_loss(disc, gen, exp, interp)
    np.testing.assert_allclose(loss.data, 0.0, atol=1e-15)


def test_ss_loss_constant_half_arithmetic():
    disc = linear_disc([0.0, 0.0, 0.0, 0.0], bias=0.5)
    gen = (rows(0.3), rows(0.1))
    exp = (rows(-0.2), rows(0.4))
    interp = [dsc.InterpolatedBatch(0.5, np.ones((1, 1, 2)), np.ones((1, 1, 2)), 0.5)]
    loss = dsc.ss_loss(disc, gen, exp, interp)
    np.testing.assert_allclose(loss.data, 0.5)


def test_ss_loss_nonnegative_random():
    rng = np.random.default_rng(5)
    disc = small_disc(seed=6)
    for _ in range(20):
        gen = (rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, (4, 2)))
        exp = (rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, (4, 2)))
        interp = [dsc.InterpolatedBatch(a, rng.uniform(-1, 1, (4, 1, 2)),
                                        rng.uniform(-1, 1, (4, 1, 2)), dsc.ss_label(a))
                  for a in rng.uniform(-1, 1.5, 3)]
        assert dsc.ss_loss(disc, gen, exp, interp).data >= 0.0


def test_ss_loss_empty_batch_error():
    disc = small_disc()
    with pytest.raises(ValueError, match="empty"):
        dsc.ss_loss(disc, (np.zeros((0, 2)), np.zeros((0, 2))),
                    (rows(1.0), rows(1.0)), [])


def test_ss_loss_requires_ss_config():
    disc = small_disc("gail_bce")
    with pytest.raises(ValueError, match="ss_mse"):
        dsc.ss_loss(disc, (rows(0), rows(0)), (rows(1), rows(1)), [])


def test_ss_loss_gradient_vs_finite_differences():
    disc = small_disc(seed=7, hidden=5)
    rng = np.random.default_rng(8)
    gen = (rng.uniform(-1, 1, (3, 2)), rng.uniform(-1, 1, (3, 2)))
    exp = (rng.uniform(-1, 1, (3, 2)), rng.uniform(-1, 1, (3, 2)))
    interp = [dsc.InterpolatedBatch(0.4, rng.uniform(-1, 1, (3, 1, 2)),
                                    rng.uniform(-1, 1, (3, 1, 2)), 0.4)]
    names = disc.params.names()
    arrays = [disc.params[n].data.copy() for n in names]

    def f(*weights):
        d2 = dsc.Discriminator.__new__(dsc.Discriminator)
        d2.cfg = disc.cfg
        d2.params = nn.ParameterSet()
        for n, w in zip(names, weights):
            d2.params.add(n, w)
        return dsc.ss_loss(d2, gen, exp, interp)

    check_gradients(f, arrays, rel_tol=1e-3)


# ---------------------------------------------------------------------------
# gail_bce_loss

def test_gail_constant_half_objective():
    disc = linear_disc([0.0] * 4, bias=0.0, objective="gail_bce")
    loss = dsc.gail_bce_loss(disc, (rows(0.2), rows(0.1)), (rows(-0.3), rows(0.2)))
    np.testing.assert_allclose(-loss.data, 2.0 * np.log(0.5), rtol=1e-12)


def test_gail_perfect_separation_objective_approaches_zero():
    disc = linear_disc([5.0, 0.0, 0.0, 0.0], objective="gail_bce")
    gen = (rows(5.0), rows(0.0))
    exp = (rows(-5.0), rows(0.0))
    loss = dsc.gail_bce_loss(disc, gen, exp)
    assert 0.0 < loss.data < 1e-9


def test_gail_requires_sigmoid_head():
    disc = small_disc("ss_mse")
    with pytest.raises(ValueError, match="sigmoid"):
        dsc.gail_bce_loss(disc, (rows(0), rows(0)), (rows(1), rows(1)))


def test_gail_loss_decreases_over_updates():
    disc = small_disc("gail_bce", seed=9)
    rng = np.random.default_rng(10)
    gen = (rng.normal(1.5, 0.3, (32, 2)), rng.normal(0, 0.3, (32, 2)))
    exp = (rng.normal(-1.5, 0.3, (32, 2)), rng.normal(0, 0.3, (32, 2)))
    adam = nn.AdamState(disc.params, learning_rate=1e-3)
    trace = []
    for _ in range(500):
        loss = dsc.gail_bce_loss(disc, gen, exp)
        trace.append(float(loss.data))
        ad.backward(loss)
        nn.adam_step(adam, disc.params)
    assert np.mean(trace[-10:]) < 0.1 * np.mean(trace[:10])


# ---------------------------------------------------------------------------
# wasserstein_loss

def test_wasserstein_identical_batches_cancel():
    disc = small_disc("wasserstein", seed=11)
    rng = np.random.default_rng(12)
    batch = (rng.uniform(-1, 1, (8, 2)), rng.uniform(-1, 1, (8, 2)))
    loss = dsc.wasserstein_loss(disc, batch, batch, gp_coeff=0.0,
                                rng=np.random.default_rng(0))
    np.testing.assert_allclose(loss.data, 0.0, atol=1e-12)


def test_wasserstein_constant_critic_pays_unit_penalty():
    disc = linear_disc([0.0] * 4, bias=1.7, objective="wasserstein")
    rng = np.random.default_rng(13)
    gen = (rng.uniform(-1, 1, (8, 2)), rng.uniform(-1, 1, (8, 2)))
    exp = (rng.uniform(-1, 1, (8, 2)), rng.uniform(-1, 1, (8, 2)))
    loss = dsc.wasserstein_loss(disc, gen, exp, gp_coeff=10.0,
                                rng=np.random.default_rng(1))
    np.testing.assert_allclose(loss.data, 10.0, rtol=1e-5)


def test_wasserstein_requires_linear_head():
    disc = small_disc("gail_bce")
    with pytest.raises(ValueError, match="linear"):
        dsc.wasserstein_loss(disc, (rows(0), rows(0)), (rows(1), rows(1)),
                             gp_coeff=0.0, rng=np.random.default_rng(0))


def test_wasserstein_scores_drift_without_penalty():
    disc = small_disc("wasserstein", seed=14)
    rng = np.random.default_rng(15)
    gen = (rng.normal(1.0, 0.2, (16, 2)), rng.normal(0, 0.2, (16, 2)))
    exp = (rng.normal(-1.0, 0.2, (16, 2)), rng.normal(0, 0.2, (16, 2)))
    adam = nn.AdamState(disc.params, learning_rate=1e-3)

    def spread():
        with ad.no_grad():
            return float(np.abs(disc.forward(*gen).data).max()
                         + np.abs(disc.forward(*exp).data).max())

    start = spread()
    for _ in range(1000):
        loss = dsc.wasserstein_loss(disc, gen, exp, gp_coeff=0.0,
                                    rng=np.random.default_rng(0))
        ad.backward(loss)
        nn.adam_step(adam, disc.params)
    assert spread() > 10.0 * max(start, 0.1)


def test_wasserstein_gradient_vs_finite_differences():
    disc = small_disc("wasserstein", seed=16, hidden=4)
    rng = np.random.default_rng(17)
    gen = (rng.uniform(-1, 1, (2, 2)), rng.uniform(-1, 1, (2, 2)))
    exp = (rng.uniform(-1, 1, (2, 2)), rng.uniform(-1, 1, (2, 2)))
    names = disc.params.names()
    arrays = [disc.params[n].data.copy() for n in names]

    def f(*weights):
        d2 = dsc.Discriminator.__new__(dsc.Discriminator)
        d2.cfg = disc.cfg
        d2.params = nn.ParameterSet()
        for n, w in zip(names, weights):
            d2.params.add(n, w)
        return dsc.wasserstein_loss(d2, gen, exp, gp_coeff=2.0,
                                    rng=np.random.default_rng(3))

    check_gradients(f, arrays, rel_tol=1e-3)


# ---------------------------------------------------------------------------
# reward shaping after training on frozen batches

def random_walk_trajs(env, n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        s = env.reset(rng)
        states, actions = [], []
        for _ in range(env.spec.horizon):
            a = rng.uniform(-1.0, 1.0, size=(3, 2))
            states.append(s)
            actions.append(a)
            s = env.step(s, a)
        out.append(envs.Trajectory(np.asarray(states), np.asarray(actions)))
    return out


def batch_sa(trajs):
    rows_s, rows_a = zip(*(dsc.traj_to_sa(t) for t in trajs))
    return np.concatenate(rows_s), np.concatenate(rows_a)


def train_frozen(disc, gen_trajs, exp_trajs, sampler, steps, lr=1e-3, n_interp=4):
    """Minimal regression loop on frozen trajectory pools."""
    adam = nn.AdamState(disc.params, learning_rate=lr)
    rng = np.random.default_rng(999)
    gen_sa = batch_sa(gen_trajs)
    exp_sa = batch_sa(exp_trajs)
    for _ in range(steps):
        interp = []
        for _ in range(n_interp):
            a = float(sampler.sample())
            g = gen_trajs[rng.integers(len(gen_trajs))]
            e = exp_trajs[rng.integers(len(exp_trajs))]
            b = dsc.interpolate(g, e, a)
            interp.append(b)
        loss = dsc.ss_loss(disc, gen_sa, exp_sa, interp)
        ad.backward(loss)
        nn.adam_step(adam, disc.params)
    return disc


def grid_scores(disc, gen_trajs, exp_trajs, alphas, pair_seed=0):
    """Mean D over fresh interpolations at each grid alpha."""
    rng = np.random.default_rng(pair_seed)
    scores = []
    for a in alphas:
        vals = []
        for _ in range(4):
            g = gen_trajs[rng.integers(len(gen_trajs))]
            e = exp_trajs[rng.integers(len(exp_trajs))]
            b = dsc.interpolate(g, e, a)
            s, act = b.states.reshape(b.states.shape[0], -1), \
                b.actions.reshape(b.actions.shape[0], -1)
            vals.append(dsc.reward(disc, s, act).mean())
        scores.append(np.mean(vals))
    return np.asarray(scores)


@pytest.fixture(scope="module")
def trained_on_yjunction():
    env = envs.YJunctionEnv()
    gen = random_walk_trajs(env, 4, seed=100)
    exp = [envs.yjunction_expert(s) for s in range(4)]
    cfg = dsc.DiscConfig(objective="ss_mse", state_dim=6, action_dim=6, hidden=32)
    disc = dsc.Discriminator(np.random.default_rng(18), cfg)
    sampler = dsc.AlphaSampler("symmetric", seed=19)
    train_frozen(disc, gen, exp, sampler, steps=1500)
    return disc, gen, exp


def test_reward_ramp_after_convergence(trained_on_yjunction):
    disc, gen, exp = trained_on_yjunction
    gen_r = dsc.reward(disc, *batch_sa(gen)).mean()
    exp_r = dsc.reward(disc, *batch_sa(exp)).mean()
    assert abs(gen_r - 0.0) < 0.1
    assert abs(exp_r - 1.0) < 0.1
    mid = grid_scores(disc, gen, exp, [0.5])[0]
    assert abs(mid - 0.5) < 0.1


def test_reward_monotone_in_alpha(trained_on_yjunction):
    disc, gen, exp = trained_on_yjunction
    alphas = np.linspace(0.0, 1.0, 11)
    scores = grid_scores(disc, gen, exp, alphas)
    rho = stats.spearmanr(alphas, scores).statistic
    assert rho >= 0.9


def test_outputs_converge_on_frozen_inputs():
    """Fixed-target regression: per-step output change goes to zero."""
    env = envs.YJunctionEnv()
    gen = random_walk_trajs(env, 2, seed=200)
    exp = [envs.yjunction_expert(s) for s in range(2)]
    cfg = dsc.DiscConfig(objective="ss_mse", state_dim=6, action_dim=6, hidden=32)
    disc = dsc.Discriminator(np.random.default_rng(20), cfg)
    # Frozen inputs including frozen interpolations.
    sampler = dsc.AlphaSampler("symmetric", seed=21)
    interp = [dsc.interpolate(gen[0], exp[0], float(a)) for a in sampler.sample(6)]
    gen_sa, exp_sa = batch_sa(gen), batch_sa(exp)
    probe_s = np.concatenate([gen_sa[0], exp_sa[0]])
    probe_a = np.concatenate([gen_sa[1], exp_sa[1]])
    adam = nn.AdamState(disc.params, learning_rate=1e-3)
    deltas = []
    prev = dsc.reward(disc, probe_s, probe_a)
    for _ in range(1200):
        loss = dsc.ss_loss(disc, gen_sa, exp_sa, interp)
        ad.backward(loss)
        nn.adam_step(adam, disc.params)
        cur = dsc.reward(disc, probe_s, probe_a)
        deltas.append(np.abs(cur - prev).mean())
        prev = cur
    assert np.mean(deltas[-50:]) < 0.05 * np.mean(deltas[:50])
    assert np.mean(deltas[-50:]) < 5e-4
