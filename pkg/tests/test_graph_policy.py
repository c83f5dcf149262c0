"""Graph encoder, edge sampling, actor head, critic, and polyak updates."""

import numpy as np
import pytest

from ssmail import autodiff as ad
from ssmail import graph_policy as gp
from ssmail import nn
from ssmail.autodiff import Tensor

from gradcheck import check_gradients

CFG = gp.PolicyConfig(n_agents=3, obs_dim=2, action_dim=2,
                      hidden=8, n_hidden_layers=1, enc_hidden=6)


def tiny_cfg(**kw):
    base = dict(n_agents=3, obs_dim=2, action_dim=2, hidden=5,
                n_hidden_layers=1, enc_hidden=4)
    base.update(kw)
    return gp.PolicyConfig(**base)


def zero_params(params):
    for _, t in params.items():
        t.data[:] = 0.0


def offdiag(n):
    return ~np.eye(n, dtype=bool)


def test_zero_weight_encoder_gives_uniform_distribution():
    enc = gp.GraphEncoder(np.random.default_rng(0), CFG)
    zero_params(enc.params)
    state = enc.initial_state()
    _, dist = enc.step(state, np.zeros((3, 2)))
    np.testing.assert_allclose(dist.probs.data[offdiag(3)], 0.5)


def test_encoder_pair_count_and_prob_sums():
    enc = gp.GraphEncoder(np.random.default_rng(1), CFG)
    state = enc.initial_state()
    _, dist = enc.step(state, np.random.default_rng(2).uniform(-1, 1, (3, 2)))
    assert dist.probs.shape == (3, 3, 2)
    assert offdiag(3).sum() == 6
    np.testing.assert_allclose(dist.probs.data.sum(axis=-1), 1.0)


def test_encoder_is_causal():
    enc = gp.GraphEncoder(np.random.default_rng(3), CFG)
    rng = np.random.default_rng(4)
    xs = rng.uniform(-1, 1, (3, 3, 2))

    def run(seq):
        state = enc.initial_state()
        outs = []
        for x in seq:
            state, dist = enc.step(state, x)
            outs.append(dist.probs.data.copy())
        return outs

    altered = xs.copy()
    altered[2] = rng.uniform(-1, 1, (3, 2))
    base = run(xs)
    other = run(altered)
    np.testing.assert_array_equal(base[0], other[0])
    np.testing.assert_array_equal(base[1], other[1])


def test_encoder_rejects_unnormalized_input():
    enc = gp.GraphEncoder(np.random.default_rng(5), CFG)
    bad = np.zeros((3, 2))
    bad[0, 0] = 2.0
    with pytest.raises(ValueError, match="normalized"):
        enc.step(enc.initial_state(), bad)


def test_encoder_state_reset_shapes_fixed():
    enc = gp.GraphEncoder(np.random.default_rng(6), CFG)
    state = enc.initial_state(batch=4)
    assert state.h.shape == (4 * 9, CFG.enc_hidden)
    state2, _ = enc.step(state, np.zeros((4, 3, 2)))
    assert state2.h.shape == state.h.shape


def sample_dist(seed=7, n=3, k=2, scale=1.0):
    rng = np.random.default_rng(seed)
    logits = Tensor(rng.uniform(-1, 1, (n, n, k)) * scale)
    return gp.InteractionGraphSample(logits, ad.softmax(logits, axis=-1), 0.5)


def test_sample_edges_low_temperature_is_argmax():
    dist = sample_dist(scale=3.0)
    dist.temperature = 1e-5
    z = gp.sample_edges(dist, hard=False, rng=0)
    idx = np.argmax(z.data[offdiag(3)], axis=-1)
    np.testing.assert_allclose(np.take_along_axis(z.data[offdiag(3)], idx[:, None], -1), 1.0,
                               atol=1e-9)


def test_hard_samples_are_one_hot():
    dist = sample_dist()
    z = gp.sample_edges(dist, hard=True, rng=1)
    rows = z.data[offdiag(3)]
    np.testing.assert_array_equal(np.sort(rows, axis=-1)[:, 0], 0.0)
    np.testing.assert_array_equal(np.sort(rows, axis=-1)[:, 1], 1.0)
    np.testing.assert_array_equal(z.data[np.eye(3, dtype=bool)], 0.0)


def test_sample_edges_requires_positive_temperature():
    dist = sample_dist()
    dist.temperature = 0.0
    with pytest.raises(ValueError, match="temperature"):
        gp.sample_edges(dist, hard=True, rng=0)


def test_hard_sample_frequencies_match_probs():
    dist = sample_dist(seed=8)
    rng = np.random.default_rng(9)
    counts = np.zeros((3, 3, 2))
    n_draws = 10_000
    for _ in range(n_draws):
        z = gp.sample_edges(dist, hard=True, rng=rng)
        counts += z.data
    freqs = counts / n_draws
    np.testing.assert_allclose(freqs[offdiag(3)], dist.probs.data[offdiag(3)], atol=0.02)


def test_sample_edges_deterministic_given_seed():
    z1 = gp.sample_edges(sample_dist(), hard=True, rng=42)
    z2 = gp.sample_edges(sample_dist(), hard=True, rng=42)
    np.testing.assert_array_equal(z1.data, z2.data)


def null_graph(n, k):
    z = np.zeros((n, n, k))
    z[..., 0] = 1.0
    z[np.eye(n, dtype=bool)] = 0.0
    return z


def one_graph(n, k, kind=1):
    z = np.zeros((n, n, k))
    z[..., kind] = 1.0
    z[np.eye(n, dtype=bool)] = 0.0
    return z


def test_actor_null_edges_leave_only_bias_path():
    actor = gp.GaussianGraphActor(np.random.default_rng(10), CFG)
    z = null_graph(3, 2)
    rng = np.random.default_rng(11)
    out_a = actor.act(rng.uniform(-1, 1, (3, 2)), z, deterministic=True)
    out_b = actor.act(rng.uniform(-1, 1, (3, 2)), z, deterministic=True)
    np.testing.assert_array_equal(out_a.mu.data, out_b.mu.data)


def test_actor_sigma_floor():
    actor = gp.GaussianGraphActor(np.random.default_rng(12), CFG)
    for name, t in actor.params.items():
        if name.startswith("sigma/"):
            t.data[:] = -50.0
    out = actor.act(np.zeros((3, 2)), one_graph(3, 2), deterministic=True)
    assert np.all(out.sigma.data >= CFG.sigma_min)


def test_actor_actions_within_bounds():
    actor = gp.GaussianGraphActor(np.random.default_rng(13), CFG)
    rng = np.random.default_rng(14)
    for _ in range(20):
        out = actor.act(rng.uniform(-1, 1, (3, 2)), one_graph(3, 2), rng=rng)
        assert np.all(np.abs(out.action.data) <= CFG.action_bound)


def analytic_squashed_log_prob(action, mu, sigma, bound):
    u = np.arctanh(np.clip(action / bound, -1 + 1e-15, 1 - 1e-15))
    gauss = -0.5 * ((u - mu) / sigma) ** 2 - np.log(sigma) - 0.5 * np.log(2 * np.pi)
    det = np.log(bound * (1.0 - np.tanh(u) ** 2))
    return (gauss - det).sum(axis=-1)


def test_log_prob_matches_analytic_density():
    actor = gp.GaussianGraphActor(np.random.default_rng(15), CFG)
    rng = np.random.default_rng(16)
    out = actor.act(rng.uniform(-1, 1, (3, 2)), one_graph(3, 2), rng=rng)
    expected = analytic_squashed_log_prob(out.action.data, out.mu.data,
                                          out.sigma.data, CFG.action_bound)
    np.testing.assert_allclose(out.log_prob.data, expected, atol=1e-6)


def test_policy_permutation_equivariance():
    actor = gp.GaussianGraphActor(np.random.default_rng(17), CFG)
    rng = np.random.default_rng(18)
    x = rng.uniform(-1, 1, (3, 2))
    z = np.random.default_rng(19).dirichlet([1.0, 1.0], size=(3, 3))
    z[np.eye(3, dtype=bool)] = 0.0
    perm = np.array([2, 0, 1])
    base = actor.act(x, z, deterministic=True).mu.data
    permuted = actor.act(x[perm], z[np.ix_(perm, perm)], deterministic=True).mu.data
    np.testing.assert_allclose(permuted, base[perm], atol=1e-12)


def test_zero_weight_critic_outputs_zero():
    critic = gp.GraphCritic(np.random.default_rng(20), CFG)
    zero_params(critic.params)
    q = critic.q(np.zeros((3, 2)), one_graph(3, 2), np.zeros((3, 2)))
    np.testing.assert_array_equal(q.data, [0.0])


def test_critic_permutation_invariance_of_pooled_q():
    critic = gp.GraphCritic(np.random.default_rng(21), CFG)
    rng = np.random.default_rng(22)
    x = rng.uniform(-1, 1, (3, 2))
    a = rng.uniform(-1, 1, (3, 2))
    z = np.random.default_rng(23).dirichlet([1.0, 1.0], size=(3, 3))
    z[np.eye(3, dtype=bool)] = 0.0
    perm = np.array([1, 2, 0])
    q1 = critic.q(x, z, a).data
    q2 = critic.q(x[perm], z[np.ix_(perm, perm)], a[perm]).data
    np.testing.assert_allclose(q1, q2, atol=1e-12)


def test_critic_gradient_wrt_action():
    cfg = tiny_cfg()
    critic = gp.GraphCritic(np.random.default_rng(24), cfg)
    rng = np.random.default_rng(25)
    x = rng.uniform(-1, 1, (3, 2))
    z = one_graph(3, 2)
    a0 = rng.uniform(-1, 1, (3, 2))

    def f(a):
        return ad.sum_(critic.q(Tensor(x), Tensor(z), a))

    check_gradients(f, [a0], rel_tol=1e-3)


def test_critic_shape_mismatch_error():
    critic = gp.GraphCritic(np.random.default_rng(26), CFG)
    with pytest.raises(ValueError, match="mismatch"):
        critic.q(np.zeros((3, 2)), one_graph(3, 2), np.zeros((2, 2)))


def test_polyak_arithmetic():
    cfg = tiny_cfg()
    pair = gp.make_critic_pair(np.random.default_rng(27), cfg, polyak_rho=0.995)
    for _, t in pair.target.params.items():
        t.data[:] = 0.0
    for _, t in pair.online.params.items():
        t.data[:] = 1.0
    gp.polyak_update(pair)
    for _, t in pair.target.params.items():
        np.testing.assert_allclose(t.data, 0.005)


def test_polyak_rho_one_is_identity():
    cfg = tiny_cfg()
    pair = gp.make_critic_pair(np.random.default_rng(28), cfg, polyak_rho=1.0)
    for _, t in pair.online.params.items():
        t.data[:] = 5.0
    before = {n: t.data.copy() for n, t in pair.target.params.items()}
    gp.polyak_update(pair)
    for n, t in pair.target.params.items():
        np.testing.assert_array_equal(t.data, before[n])


def test_polyak_geometric_convergence():
    cfg = tiny_cfg()
    pair = gp.make_critic_pair(np.random.default_rng(29), cfg, polyak_rho=0.995)
    for _, t in pair.target.params.items():
        t.data[:] = 0.0
    for _, t in pair.online.params.items():
        t.data[:] = 1.0
    for _ in range(3000):
        gp.polyak_update(pair)
    gap = max(np.abs(t.data - 1.0).max() for _, t in pair.target.params.items())
    assert gap < 1e-6


def test_polyak_name_mismatch_error():
    cfg = tiny_cfg()
    pair = gp.make_critic_pair(np.random.default_rng(30), cfg)
    other = gp.GraphCritic(np.random.default_rng(31), tiny_cfg(n_hidden_layers=2))
    mismatched = gp.CriticPair(pair.online, other, 0.9)
    with pytest.raises(ValueError, match="names"):
        gp.polyak_update(mismatched)
    shaped = gp.GraphCritic(np.random.default_rng(31), tiny_cfg(hidden=4))
    with pytest.raises(ValueError, match="shapes"):
        gp.polyak_update(gp.CriticPair(pair.online, shaped, 0.9))


def test_full_policy_and_critic_gradient_check():
    """Gradient soundness through encoder, edge sampling, actor and critic."""
    cfg = tiny_cfg(hidden=4, enc_hidden=3)
    rng = np.random.default_rng(32)
    enc = gp.GraphEncoder(rng, cfg)
    actor = gp.GaussianGraphActor(rng, cfg)
    critic = gp.GraphCritic(rng, cfg)
    xs = np.random.default_rng(33).uniform(-1, 1, (2, 3, 2))

    sets = [("enc", enc.params), ("actor", actor.params), ("critic", critic.params)]
    names = [(sname, pname) for sname, pset in sets for pname in pset.names()]
    arrays = [dict(sets)[sname][pname].data.copy() for sname, pname in names]

    def f(*weights):
        packs = {"enc": nn.ParameterSet(), "actor": nn.ParameterSet(),
                 "critic": nn.ParameterSet()}
        for (sname, pname), w in zip(names, weights):
            packs[sname].add(pname, w)
        enc2 = gp.GraphEncoder.__new__(gp.GraphEncoder)
        enc2.cfg, enc2.params = cfg, packs["enc"]
        actor2 = gp.GaussianGraphActor.__new__(gp.GaussianGraphActor)
        actor2.cfg, actor2.params = cfg, packs["actor"]
        critic2 = gp.GraphCritic.__new__(gp.GraphCritic)
        critic2.cfg, critic2.params = cfg, packs["critic"]

        state = enc2.initial_state()
        loss_terms = []
        for t in range(2):
            state, dist = enc2.step(state, Tensor(xs[t]))
            z = gp.sample_edges(dist, hard=False, rng=100 + t)
            out = actor2.act(Tensor(xs[t]), z, rng=np.random.default_rng(200 + t))
            q = critic2.q(Tensor(xs[t]), z, out.action)
            loss_terms.append(ad.sum_(q) + ad.mean(out.log_prob) * 0.1)
        return loss_terms[0] + loss_terms[1]

    check_gradients(f, arrays, rel_tol=1e-3)
