"""Graph-structured multi-agent policy: a recurrent graph encoder that
infers a distribution over pairwise edge types from observed history, and a
graph soft actor-critic that turns a sampled interaction graph into
Gaussian actions and joint Q-values.

Edge type 0 is the hard-zero "no edge" type: it contributes no message, so
a pair assigned entirely to type 0 is effectively disconnected.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PolicyConfig:
    n_agents: int
    obs_dim: int
    action_dim: int
    k_edge_types: int = 2
    hidden: int = 64
    n_hidden_layers: int = 2
    enc_hidden: int = 64
    temperature: float = 0.5
    sigma_min: float = 1e-3
    action_bound: float = 2.0
    input_limit: float = 1.5


@dataclass
class EncoderState:
    """Per-pair LSTM carry, flattened to [batch * n_agents^2, enc_hidden]."""
    h: Tensor
    c: Tensor
    batch: int


@dataclass
class InteractionGraphSample:
    """Distribution (and optional sample) over K edge types per ordered pair."""
    logits: Tensor        # [.., N, N, K]
    probs: Tensor         # softmax of logits over K
    temperature: float
    z: Tensor | None = None


@dataclass
class PolicyOutput:
    mu: Tensor            # [.., N, action_dim]
    sigma: Tensor         # positive, same shape
    action: Tensor        # tanh-squashed, scaled to the action bound
    log_prob: Tensor      # [.., N], per-agent log density of `action`


def _hidden_sizes(n_in, cfg, n_out):
    return [n_in] + [cfg.hidden] * cfg.n_hidden_layers + [n_out]


def _batched(x, ndim):
    """Promote to `ndim` dims by adding a leading batch axis if needed."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim == ndim - 1:
        return ad.reshape(x, (1,) + x.shape), True
    if x.ndim != ndim:
        raise ValueError(f"expected {ndim - 1}- or {ndim}-dimensional input, got {x.shape}")
    return x, False


def _maybe_squeeze(t, squeezed):
    return ad.reshape(t, t.shape[1:]) if squeezed else t


def _pair_concat(feats):
    """[B, N, d] -> [B, N, N, 2d] with entry (i, j) = concat(f_i, f_j)."""
    b, n, d = feats.shape
    fd = feats.data
    out = np.concatenate([np.broadcast_to(fd[:, :, None, :], (b, n, n, d)),
                          np.broadcast_to(fd[:, None, :, :], (b, n, n, d))], axis=3)

    def bwd(g):
        return (g[..., :d].sum(axis=2) + g[..., d:].sum(axis=1),)

    return ad.custom_op(out, (feats,), bwd, "pair_concat")


def _graph_conv(params, cfg, feats, z):
    """z-weighted per-type edge messages summed over senders.

    feats is [B, N, d]; z is [B, N, N, K]. Edge type 0 contributes nothing.
    Returns [B, N, hidden].
    """
    b, n, d = feats.shape
    pair_flat = ad.reshape(_pair_concat(feats), (b * n * n, 2 * d))
    msg = None
    for k in range(1, cfg.k_edge_types):
        h_k = nn.mlp_forward(params, pair_flat, prefix=f"edge{k}/")
        h_k = ad.reshape(h_k, (b, n, n, h_k.shape[-1]))
        term = h_k * ad.narrow(z, 3, k, 1)
        msg = term if msg is None else msg + term
    msg = msg * nn.offdiag_mask(n)
    return ad.sum_(msg, axis=1)  # over senders i != j


class GraphEncoder:
    """Recurrent edge-type inference: one message-passing round over the
    current observations, a per-pair LSTM over time, then per-pair logits."""

    def __init__(self, rng, cfg: PolicyConfig):
        self.cfg = cfg
        p = nn.ParameterSet()
        nn.init_mlp(rng, _hidden_sizes(cfg.obs_dim, cfg, cfg.hidden), p, "emb/")
        nn.init_mlp(rng, _hidden_sizes(2 * cfg.hidden, cfg, cfg.hidden), p, "edge1/")
        nn.init_mlp(rng, _hidden_sizes(2 * cfg.hidden, cfg, cfg.hidden), p, "node1/")
        nn.init_mlp(rng, _hidden_sizes(2 * cfg.hidden, cfg, cfg.hidden), p, "edge2/")
        nn.init_lstm(rng, cfg.hidden, cfg.enc_hidden, p, "lstm/")
        nn.init_mlp(rng, _hidden_sizes(cfg.enc_hidden, cfg, cfg.k_edge_types), p, "head/")
        self.params = p

    def initial_state(self, batch=1):
        n = self.cfg.n_agents
        width = (batch * n * n, self.cfg.enc_hidden)
        return EncoderState(Tensor(np.zeros(width)), Tensor(np.zeros(width)), batch)

    def detached_state(self, state):
        return EncoderState(state.h.detach(), state.c.detach(), state.batch)

    def state_from_arrays(self, h, c, batch):
        return EncoderState(Tensor(h), Tensor(c), batch)

    def step(self, state, x):
        """Consume observations x ([N, obs] or [B, N, obs]) for one timestep.

        Returns (next state, InteractionGraphSample). Inputs are expected in
        the normalized range; values beyond +-input_limit are rejected.
        """
        cfg = self.cfg
        xb, squeezed = _batched(x, 3)
        b, n, d = xb.shape
        if n != cfg.n_agents or d != cfg.obs_dim:
            raise ValueError(f"encoder expects [{cfg.n_agents}, {cfg.obs_dim}] "
                             f"observations, got {xb.shape[1:]}")
        if b != state.batch:
            raise ValueError(f"encoder state batch {state.batch} does not match input {b}")
        if np.any(np.abs(xb.data) > cfg.input_limit):
            raise ValueError(f"encoder input outside [-{cfg.input_limit}, {cfg.input_limit}]; "
                             "observations must be normalized")
        params = self.params
        flat_x = ad.reshape(xb, (b * n, d))
        emb = ad.reshape(nn.mlp_forward(params, flat_x, prefix="emb/"), (b, n, cfg.hidden))
        e1 = self._pair_mlp(emb, "edge1/")
        agg = ad.sum_(e1 * nn.offdiag_mask(n), axis=1)
        v1_in = ad.reshape(ad.concat([agg, emb], axis=2), (b * n, 2 * cfg.hidden))
        v1 = ad.reshape(nn.mlp_forward(params, v1_in, prefix="node1/"), (b, n, cfg.hidden))
        e2 = self._pair_mlp(v1, "edge2/")
        pair_flat = ad.reshape(e2, (b * n * n, cfg.hidden))
        h_new, c_new = nn.lstm_step(params, pair_flat, state.h, state.c, prefix="lstm/")
        logits = nn.mlp_forward(params, h_new, prefix="head/")
        logits = ad.reshape(logits, (b, n, n, cfg.k_edge_types))
        probs = ad.softmax(logits, axis=-1)
        sample = InteractionGraphSample(_maybe_squeeze(logits, squeezed),
                                        _maybe_squeeze(probs, squeezed),
                                        cfg.temperature)
        return EncoderState(h_new, c_new, b), sample

    def _pair_mlp(self, h_nodes, prefix):
        b, n, d = h_nodes.shape
        flat = ad.reshape(_pair_concat(h_nodes), (b * n * n, 2 * d))
        out = nn.mlp_forward(self.params, flat, prefix=prefix)
        return ad.reshape(out, (b, n, n, out.shape[-1]))


def sample_edges(dist, hard, rng):
    """Concrete (Gumbel-softmax) sample of the interaction graph.

    With `hard`, the forward value is the exact one-hot argmax while the
    gradient is that of the relaxed sample (straight-through). Diagonal
    pairs are masked to zero. The sample is stored on `dist.z` and returned.
    """
    if dist.temperature <= 0.0:
        raise ValueError("temperature must be positive")
    rng = np.random.default_rng(rng) if isinstance(rng, (int, np.integer)) else rng
    logits, squeezed = _batched(dist.logits, 4)
    eps = 1e-20
    u = rng.random(logits.shape)
    gumbel = -np.log(-np.log(u + eps) + eps)
    y = ad.softmax((logits + Tensor(gumbel)) * (1.0 / dist.temperature), axis=-1)
    if hard:
        idx = np.argmax(y.data, axis=-1)
        onehot = np.eye(logits.shape[-1])[idx]
        y = Tensor(onehot - y.data) + y
    z = _maybe_squeeze(y * Tensor(nn.offdiag_mask(logits.shape[1])), squeezed)
    dist.z = z
    return z


class GaussianGraphActor:
    """Turns (observations, interaction graph) into per-agent squashed
    Gaussian actions with exact log densities."""

    def __init__(self, rng, cfg: PolicyConfig):
        self.cfg = cfg
        p = nn.ParameterSet()
        for k in range(1, cfg.k_edge_types):
            nn.init_mlp(rng, _hidden_sizes(2 * cfg.obs_dim, cfg, cfg.hidden), p, f"edge{k}/")
        nn.init_mlp(rng, _hidden_sizes(cfg.hidden, cfg, cfg.action_dim), p, "mu/")
        nn.init_mlp(rng, _hidden_sizes(cfg.hidden, cfg, cfg.action_dim), p, "sigma/")
        self.params = p

    def act(self, x, z, rng=None, deterministic=False):
        """Sample (or take the mean of) the per-agent squashed Gaussian."""
        cfg = self.cfg
        xb, squeezed = _batched(x, 3)
        zb, _ = _batched(z, 4)
        agg = _graph_conv(self.params, cfg, xb, zb)
        b, n = xb.shape[:2]
        flat = ad.reshape(agg, (b * n, cfg.hidden))
        mu = nn.mlp_forward(self.params, flat, prefix="mu/")
        sigma = ad.softplus(nn.mlp_forward(self.params, flat, prefix="sigma/")) + cfg.sigma_min
        if np.any(np.isnan(mu.data)) or np.any(np.isnan(sigma.data)):
            raise ValueError("policy head produced NaN")
        if deterministic:
            u = mu
        else:
            if rng is None:
                raise ValueError("rng required for stochastic actions")
            u = mu + sigma * Tensor(rng.standard_normal(mu.shape))
        action = ad.tanh(u) * cfg.action_bound
        log_prob = self._log_prob(u, mu, sigma)
        return PolicyOutput(
            mu=_maybe_squeeze(ad.reshape(mu, (b, n, cfg.action_dim)), squeezed),
            sigma=_maybe_squeeze(ad.reshape(sigma, (b, n, cfg.action_dim)), squeezed),
            action=_maybe_squeeze(ad.reshape(action, (b, n, cfg.action_dim)), squeezed),
            log_prob=_maybe_squeeze(ad.reshape(log_prob, (b, n)), squeezed),
        )

    def _log_prob(self, u, mu, sigma):
        """Density of bound*tanh(u) where u ~ N(mu, sigma^2), per agent."""
        gauss = ad.square((u - mu) / sigma) * (-0.5) - ad.log(sigma) - 0.5 * LOG_2PI
        # log d(action)/du for action = bound * tanh(u), via
        # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))
        log_det = 2.0 * (np.log(2.0) - u - ad.softplus(u * (-2.0))) + np.log(self.cfg.action_bound)
        return ad.sum_(gauss - log_det, axis=1)


class GraphCritic:
    """Joint Q over the same graph convolution, with actions joined to the
    node features; per-agent heads are mean-pooled into the joint value."""

    def __init__(self, rng, cfg: PolicyConfig):
        self.cfg = cfg
        p = nn.ParameterSet()
        d = cfg.obs_dim + cfg.action_dim
        for k in range(1, cfg.k_edge_types):
            nn.init_mlp(rng, _hidden_sizes(2 * d, cfg, cfg.hidden), p, f"edge{k}/")
        nn.init_mlp(rng, _hidden_sizes(cfg.hidden, cfg, 1), p, "q/")
        self.params = p

    def q(self, x, z, a, per_agent=False):
        """Joint Q(s, z, a) as [B, 1] (or per-agent values [.., N, 1])."""
        cfg = self.cfg
        xb, squeezed = _batched(x, 3)
        ab, _ = _batched(a, 3)
        zb, _ = _batched(z, 4)
        if ab.shape[:2] != xb.shape[:2]:
            raise ValueError(f"state/action shapes mismatch: {xb.shape} vs {ab.shape}")
        feats = ad.concat([xb, ab], axis=2)
        agg = _graph_conv(self.params, cfg, feats, zb)
        b, n = xb.shape[:2]
        flat = ad.reshape(agg, (b * n, cfg.hidden))
        heads = ad.reshape(nn.mlp_forward(self.params, flat, prefix="q/"), (b, n, 1))
        if per_agent:
            return _maybe_squeeze(heads, squeezed)
        return _maybe_squeeze(ad.mean(heads, axis=1), squeezed)

    def clone(self):
        twin = GraphCritic.__new__(GraphCritic)
        twin.cfg = self.cfg
        twin.params = self.params.copy()
        return twin


@dataclass
class CriticPair:
    online: GraphCritic
    target: GraphCritic
    polyak_rho: float = 0.995

    def __post_init__(self):
        if not 0.0 < self.polyak_rho <= 1.0:
            raise ValueError("polyak_rho must be in (0, 1]")


def make_critic_pair(rng, cfg, polyak_rho=0.995):
    online = GraphCritic(rng, cfg)
    return CriticPair(online, online.clone(), polyak_rho)


def polyak_update(pair):
    """target <- rho * target + (1 - rho) * online, elementwise."""
    online, target = pair.online.params, pair.target.params
    if online.names() != target.names():
        raise ValueError("online/target parameter names do not match")
    rho = pair.polyak_rho
    for name, t in target.items():
        src = online[name].data
        if src.shape != t.data.shape:
            raise ValueError(f"online/target shapes differ for {name!r}: "
                             f"{src.shape} vs {t.data.shape}")
        t.data *= rho
        t.data += (1.0 - rho) * src
