"""Adversarial objectives on centralized state-action pairs.

The main objective regresses the discriminator to interpolation weights:
generated pairs carry label 0, expert pairs label 1, and pairs from a
blended trajectory carry the blend weight itself (zero past the expert).
Binary cross entropy and a gradient-penalized Wasserstein critic are
included as baselines.

Throughout this module `alpha` is the expert weight:
    blended = (1 - alpha) * generated + alpha * expert
so alpha = 0 reproduces the generated trajectory, alpha = 1 the expert,
negative alpha extrapolates away from the expert, and alpha > 1 beyond it.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .envs import Trajectory

ALPHA_INTERVALS = {
    "positive_unit": (0.0, 1.0),
    "symmetric": (-1.0, 1.0),
    "extended": (-1.0, 1.5),
}

OBJECTIVES = ("ss_mse", "gail_bce", "wasserstein")


def ss_label(alpha):
    """Regression target for a blend weight: alpha itself up to the expert,
    zero beyond it."""
    alpha = np.asarray(alpha, dtype=np.float64)
    out = np.where(alpha > 1.0, 0.0, alpha)
    return float(out) if out.ndim == 0 else out


class AlphaSampler:
    """Uniform blend-weight sampler over one of the declared intervals."""

    def __init__(self, mode="symmetric", seed=0):
        if mode not in ALPHA_INTERVALS:
            raise ValueError(f"unknown alpha mode {mode!r}")
        self.mode = mode
        self.interval = ALPHA_INTERVALS[mode]
        self.rng = np.random.default_rng(seed)

    def sample(self, n=None):
        lo, hi = self.interval
        return self.rng.uniform(lo, hi, size=n)

    def label(self, alpha):
        return ss_label(alpha)


@dataclass
class InterpolatedBatch:
    """Pointwise blend of a generated and an expert trajectory."""
    alpha: float
    states: np.ndarray
    actions: np.ndarray
    label: float


def interpolate(tau_g, tau_e, alpha):
    """Blend two trajectories with expert weight alpha.

    The longer trajectory is truncated so both align; differing agent
    counts or dimensions are an error.
    """
    if tau_g.n_agents != tau_e.n_agents or tau_g.states.shape[2] != tau_e.states.shape[2]:
        raise ValueError(f"trajectories do not align: {tau_g.states.shape} "
                         f"vs {tau_e.states.shape}")
    horizon = min(tau_g.horizon, tau_e.horizon)
    g_s, e_s = tau_g.states[:horizon], tau_e.states[:horizon]
    g_a, e_a = tau_g.actions[:horizon], tau_e.actions[:horizon]
    alpha = float(alpha)
    return InterpolatedBatch(
        alpha=alpha,
        states=(1.0 - alpha) * g_s + alpha * e_s,
        actions=(1.0 - alpha) * g_a + alpha * e_a,
        label=ss_label(alpha),
    )


@dataclass
class DiscConfig:
    objective: str = "ss_mse"
    state_dim: int = 6            # joint over agents
    action_dim: int = 6
    hidden: int = 64
    n_hidden_layers: int = 2
    gp_coeff: float = 10.0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def output_activation(self):
        # Labels can be negative under ss_mse and unbounded under the
        # Wasserstein critic, so only the BCE head is squashed.
        return "sigmoid" if self.objective == "gail_bce" else None


class Discriminator:
    """Centralized scorer of joint (state, action) pairs; relu hidden
    layers, output head fixed by the objective."""

    def __init__(self, rng, cfg: DiscConfig):
        self.cfg = cfg
        sizes = ([cfg.state_dim + cfg.action_dim]
                 + [cfg.hidden] * cfg.n_hidden_layers + [1])
        self.params = nn.init_mlp(rng, sizes)

    def logits(self, s, a):
        """Pre-activation scores, [batch, 1]."""
        s = s if isinstance(s, Tensor) else Tensor(s)
        a = a if isinstance(a, Tensor) else Tensor(a)
        if s.ndim != 2 or a.ndim != 2 or s.shape[0] != a.shape[0]:
            raise ValueError(f"expected matching [batch, dim] inputs, "
                             f"got {s.shape} and {a.shape}")
        out = nn.mlp_forward(self.params, ad.concat([s, a], axis=1), activation="relu")
        if np.any(np.isnan(out.data)):
            raise ValueError("discriminator produced NaN")
        return out

    def forward(self, s, a):
        """Scores with the objective's output activation applied."""
        out = self.logits(s, a)
        return ad.sigmoid(out) if self.cfg.output_activation == "sigmoid" else out


def d_forward(disc, s, a):
    return disc.forward(s, a)


def traj_to_sa(traj_or_batch):
    """Flatten [T, N, d] states/actions into per-timestep joint rows."""
    t = traj_or_batch
    T = t.states.shape[0]
    return t.states.reshape(T, -1), t.actions.reshape(T, -1)


def _check_nonempty(*arrays):
    for arr in arrays:
        if np.size(arr) == 0:
            raise ValueError("empty batch")


def ss_loss(disc, gen_batch, exp_batch, interp_batches):
    """Sum of the three regression terms, each a mean over its own batch:
    generated to 0, expert to 1, blends to their labels."""
    if disc.cfg.objective != "ss_mse":
        raise ValueError("discriminator was not configured for ss_mse")
    gen_s, gen_a = gen_batch
    exp_s, exp_a = exp_batch
    _check_nonempty(gen_s, exp_s)
    if not interp_batches:
        raise ValueError("empty batch")
    layers = [(np.asarray(b.states), np.asarray(b.actions), b.label)
              for b in interp_batches]
    int_s = np.concatenate([s.reshape(len(s), -1) for s, _, _ in layers])
    int_a = np.concatenate([a.reshape(len(a), -1) for _, a, _ in layers])
    labels = np.concatenate([np.full(len(s), lab) for s, _, lab in layers])
    term_gen = ad.mean(ad.square(disc.forward(gen_s, gen_a)))
    term_exp = ad.mean(ad.square(1.0 - disc.forward(exp_s, exp_a)))
    preds = disc.forward(int_s, int_a)
    term_int = ad.mean(ad.square(Tensor(labels[:, None]) - preds))
    return term_gen + term_exp + term_int


def gail_bce_loss(disc, gen_batch, exp_batch):
    """Negated binary cross-entropy objective
    E_gen[log D] + E_exp[log(1 - D)], computed stably from logits."""
    if disc.cfg.output_activation != "sigmoid":
        raise ValueError("gail_bce requires a sigmoid output head (D in (0,1))")
    gen_s, gen_a = gen_batch
    exp_s, exp_a = exp_batch
    _check_nonempty(gen_s, exp_s)
    # -log sigmoid(x) = softplus(-x);  -log(1 - sigmoid(x)) = softplus(x)
    gen_logits = disc.logits(gen_s, gen_a)
    exp_logits = disc.logits(exp_s, exp_a)
    return ad.mean(ad.softplus(-gen_logits)) + ad.mean(ad.softplus(exp_logits))


def wasserstein_loss(disc, gen_batch, exp_batch, gp_coeff, rng):
    """Critic loss E_gen[D] - E_exp[D] plus a unit-gradient penalty on
    random input blends.

    The input gradient inside the penalty is estimated with central
    differences per input dimension; the estimate is built from ordinary
    forward passes, so it stays differentiable in the parameters.
    """
    if disc.cfg.output_activation is not None:
        raise ValueError("wasserstein requires a linear output head")
    gen_s, gen_a = gen_batch
    exp_s, exp_a = exp_batch
    _check_nonempty(gen_s, exp_s)
    base = ad.mean(disc.forward(gen_s, gen_a)) - ad.mean(disc.forward(exp_s, exp_a))
    if gp_coeff == 0.0:
        return base

    b = min(len(gen_s), len(exp_s))
    u = rng.random((b, 1))
    mix_s = u * gen_s[:b] + (1.0 - u) * exp_s[:b]
    mix_a = u * gen_a[:b] + (1.0 - u) * exp_a[:b]
    x = np.concatenate([mix_s, mix_a], axis=1)
    dim = x.shape[1]
    eps = 1e-4
    # One big batch with +eps and -eps probes for every input dimension.
    probes = np.repeat(x[None, :, :], 2 * dim, axis=0)
    for j in range(dim):
        probes[2 * j, :, j] += eps
        probes[2 * j + 1, :, j] -= eps
    flat = probes.reshape(2 * dim * b, dim)
    scores = disc.forward(flat[:, :mix_s.shape[1]], flat[:, mix_s.shape[1]:])
    scores = ad.reshape(scores, (2 * dim, b))
    plus = ad.narrow(ad.reshape(scores, (dim, 2, b)), 1, 0, 1)
    minus = ad.narrow(ad.reshape(scores, (dim, 2, b)), 1, 1, 1)
    grad_est = (plus - minus) * (1.0 / (2.0 * eps))   # [dim, 1, b]
    norm = ad.sqrt(ad.sum_(ad.square(grad_est), axis=0) + 1e-12)
    penalty = ad.mean(ad.square(norm - 1.0))
    return base + gp_coeff * penalty


def reward(disc, s, a):
    """Per-pair policy reward from the live discriminator (never cached).

    ss_mse and wasserstein use the raw score; the BCE baseline uses the
    standard -log D shaping, which is computed stably from logits.
    """
    with ad.no_grad():
        if disc.cfg.objective == "gail_bce":
            logits = disc.logits(s, a)
            out = np.maximum(-logits.data, 0.0) + np.log1p(np.exp(-np.abs(logits.data)))
        else:
            out = disc.forward(s, a).data
    return out[:, 0]
