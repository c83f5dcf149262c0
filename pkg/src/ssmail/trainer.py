"""The outer training loop: collect rollouts under the forcing curriculum,
fit the discriminator on generated/expert/blended batches, then run soft
actor-critic updates whose rewards come from the live discriminator.

Rewards are never stored; every sampled batch re-scores its pairs against
the current discriminator. The policy trains on both generated and blended
transitions. Per-seed runs are fully determined by (config, seed).
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import curriculum as cur
from . import discriminator as dsc
from . import envs, nn
from . import graph_policy as gp
from .autodiff import Tensor


@dataclass
class SACConfig:
    gamma: float = 0.99
    entropy_coef: float = 0.01
    entropy_coef_final: float | None = None   # linear anneal target, if set
    polyak_rho: float = 0.995
    batch_size: int = 256
    lr_policy: float = 3e-4
    lr_critic: float = 3e-4
    lr_disc: float = 3e-4
    policy_updates_per_epoch: int = 4
    disc_steps_per_policy_update: int = 5
    critic_updates: int = 2
    actor_windows: int = 8
    window_len: int = 10

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.entropy_coef < 0.0:
            raise ValueError("entropy_coef must be non-negative")


@dataclass
class RunConfig:
    env: str = "yjunction"            # yjunction | letters | dataset
    dataset_path: str | None = None
    objective: str = "ss_mse"
    alpha_mode: str = "symmetric"
    n_interp: int = 4
    gp_coeff: float = 10.0
    curriculum_enabled: bool = True
    curriculum_beta_frac: float = 0.15
    curriculum_base: float = 1.5
    seeds: tuple = (0, 1, 2, 3, 4)
    epochs: int = 150
    hidden: int = 64
    n_hidden_layers: int = 2
    disc_hidden: int | None = None        # defaults to `hidden`
    disc_n_hidden_layers: int | None = None
    enc_hidden: int = 64
    k_edge_types: int = 2
    temperature: float = 0.5
    episodes_per_epoch: int = 8
    eval_episodes: int = 8
    n_expert_episodes: int = 32
    buffer_capacity: int = 100_000
    seq_pool_size: int = 32
    out_dir: str = "runs/out"
    noise_sigma: float = 0.0
    eval_horizons: tuple = (1, 5, 10)
    compounding_prefix: int = 10
    compounding_episodes: int = 4
    early_stop_patience: int = 20
    workers: int = 1
    sac: SACConfig = field(default_factory=SACConfig)

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ValueError("at least one seed is required")
        if self.env == "dataset" and not self.dataset_path:
            raise ValueError("dataset env requires dataset_path")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "sac" in data and isinstance(data["sac"], dict):
            data["sac"] = SACConfig(**data["sac"])
        if "seeds" in data:
            data["seeds"] = tuple(data["seeds"])
        if "eval_horizons" in data:
            data["eval_horizons"] = tuple(data["eval_horizons"])
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


METRIC_COLUMNS = ("epoch", "seed", "training_error", "discriminator_loss",
                  "policy_objective", "mode_coverage", "forcing_frequency",
                  "mean_segment_length")


def _seeded(seed, *extra):
    """Generator from a flat list of integer seed parts."""
    parts = list(seed) if isinstance(seed, (list, tuple)) else [seed]
    return np.random.default_rng([int(p) for p in parts] + [int(e) for e in extra])


# ---------------------------------------------------------------------------
# Replay buffer

class ReplayBuffer:
    """FIFO ring of transitions. Holds (s, z, a, s', z', done, source);
    rewards are intentionally absent and recomputed at sampling time."""

    def __init__(self, capacity, n_agents, d_s, d_a, k):
        self.capacity = capacity
        self.s = np.zeros((capacity, n_agents, d_s))
        self.z = np.zeros((capacity, n_agents, n_agents, k))
        self.a = np.zeros((capacity, n_agents, d_a))
        self.s2 = np.zeros((capacity, n_agents, d_s))
        self.z2 = np.zeros((capacity, n_agents, n_agents, k))
        self.done = np.zeros(capacity, dtype=bool)
        self.alpha = np.full(capacity, np.nan)   # NaN marks generated
        self.ptr = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, z, a, s2, z2, done, alpha=None):
        i = self.ptr
        self.s[i], self.z[i], self.a[i] = s, z, a
        self.s2[i], self.z2[i] = s2, z2
        self.done[i] = done
        self.alpha[i] = np.nan if alpha is None else alpha
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch, interp_fraction=0.5):
        """Mixed batch over generated and blended transitions; falls back
        to whatever source is available."""
        if self.size < batch:
            raise ValueError(f"buffer holds {self.size} < batch {batch}")
        is_interp = ~np.isnan(self.alpha[:self.size])
        interp_idx = np.flatnonzero(is_interp)
        gen_idx = np.flatnonzero(~is_interp)
        n_interp = min(int(round(batch * interp_fraction)), len(interp_idx))
        n_gen = batch - n_interp
        if n_gen > len(gen_idx):
            n_interp += n_gen - len(gen_idx)
            n_gen = len(gen_idx)
        picks = []
        if n_gen:
            picks.append(rng.choice(gen_idx, size=n_gen, replace=True))
        if n_interp:
            picks.append(rng.choice(interp_idx, size=n_interp, replace=True))
        idx = np.concatenate(picks)
        return {"s": self.s[idx], "z": self.z[idx], "a": self.a[idx],
                "s2": self.s2[idx], "z2": self.z2[idx],
                "done": self.done[idx], "alpha": self.alpha[idx]}


# ---------------------------------------------------------------------------
# The per-seed agent bundle

class Agent:
    """Networks, optimizers and data interfaces for one training run."""

    def __init__(self, run_cfg, env, normalizer, seed):
        self.run_cfg = run_cfg
        self.env = env
        self.normalizer = normalizer
        spec = env.spec
        self.pcfg = gp.PolicyConfig(
            n_agents=spec.n_agents, obs_dim=spec.state_dim,
            action_dim=spec.action_dim, k_edge_types=run_cfg.k_edge_types,
            hidden=run_cfg.hidden, n_hidden_layers=run_cfg.n_hidden_layers,
            enc_hidden=run_cfg.enc_hidden, temperature=run_cfg.temperature,
            action_bound=1.0)   # policy acts in normalized action space
        rng = np.random.default_rng([seed, 0xA11CE])
        self.encoder = gp.GraphEncoder(rng, self.pcfg)
        self.actor = gp.GaussianGraphActor(rng, self.pcfg)
        self.critics = gp.make_critic_pair(rng, self.pcfg, run_cfg.sac.polyak_rho)
        dcfg = dsc.DiscConfig(objective=run_cfg.objective,
                              state_dim=spec.n_agents * spec.state_dim,
                              action_dim=spec.n_agents * spec.action_dim,
                              hidden=run_cfg.disc_hidden or run_cfg.hidden,
                              n_hidden_layers=(run_cfg.disc_n_hidden_layers
                                               or run_cfg.n_hidden_layers),
                              gp_coeff=run_cfg.gp_coeff)
        self.disc = dsc.Discriminator(rng, dcfg)
        sac = run_cfg.sac
        self.opt_actor = nn.AdamState(self.actor.params, sac.lr_policy)
        self.opt_encoder = nn.AdamState(self.encoder.params, sac.lr_policy)
        self.opt_critic = nn.AdamState(self.critics.online.params, sac.lr_critic)
        self.opt_disc = nn.AdamState(self.disc.params, sac.lr_disc)
        self.entropy_coef = sac.entropy_coef
        self.disc_updates = 0
        self.policy_updates = 0

    # -- network-facing representations ------------------------------------
    def obs_of(self, states):
        """Normalized observations, clipped into the encoder's range."""
        limit = self.pcfg.input_limit
        return np.clip(self.normalizer.transform(states), -limit, limit)

    def act_of(self, actions):
        return np.asarray(actions) / self.env.spec.v_max

    def raw_action(self, policy_action):
        return np.asarray(policy_action) * self.env.spec.v_max

    def disc_inputs(self, states, actions):
        """Joint per-timestep rows for the discriminator."""
        s = np.asarray(states)
        a = np.asarray(actions)
        batch = s.shape[0]
        return (self.obs_of(s).reshape(batch, -1),
                self.act_of(a).reshape(batch, -1))

    def rewards(self, states, actions):
        s, a = self.disc_inputs(states, actions)
        return dsc.reward(self.disc, s, a)

    # -- graph annotation ----------------------------------------------------
    def annotate_graphs(self, states_seq, rng):
        """Hard edge samples for a batch of state sequences [B, T, N, d],
        running the encoder under no_grad. Returns z of [B, T, N, N, K]."""
        b, t = states_seq.shape[:2]
        n, k = self.pcfg.n_agents, self.pcfg.k_edge_types
        zs = np.zeros((b, t, n, n, k))
        with ad.no_grad():
            state = self.encoder.initial_state(b)
            for step in range(t):
                state, dist = self.encoder.step(state, self.obs_of(states_seq[:, step]))
                zs[:, step] = gp.sample_edges(dist, hard=True, rng=rng).data
        return zs


# ---------------------------------------------------------------------------
# Rollout collection

def collect_rollouts(agent, n_episodes, forcing_freq, rng, forcing_experts=None):
    """Autoregressive rollouts with Bernoulli teacher-forcing interventions.

    Returns (trajectories, transitions, plans): trajectories hold the fed
    states and taken actions; transitions are consistent one-step tuples
    (fed state, action, environment result) annotated with edge samples.
    """
    env = agent.env
    spec = env.spec
    horizon = spec.horizon
    n, d_s, d_a = spec.n_agents, spec.state_dim, spec.action_dim
    e = n_episodes
    if forcing_freq > 0.0 and not forcing_experts:
        raise ValueError("forcing requires expert trajectories")
    plans, targets = [], []
    for i in range(e):
        expert = None
        if forcing_experts:
            expert = forcing_experts[rng.integers(len(forcing_experts))]
        plans.append(cur.apply_forcing(horizon, expert, forcing_freq, rng))
        targets.append(expert)

    states = np.stack([env.reset(rng) for _ in range(e)])
    fed = np.zeros((e, horizon, n, d_s))
    acts = np.zeros((e, horizon, n, d_a))
    zs = np.zeros((e, horizon + 1, n, n, agent.pcfg.k_edge_types))
    env_next = np.zeros((e, horizon, n, d_s))
    with ad.no_grad():
        enc_state = agent.encoder.initial_state(e)
        for t in range(horizon):
            fed[:, t] = states
            enc_state, dist = agent.encoder.step(enc_state, agent.obs_of(states))
            zs[:, t] = gp.sample_edges(dist, hard=True, rng=rng).data
            out = agent.actor.act(agent.obs_of(states), zs[:, t], rng=rng)
            if np.any(np.isnan(out.action.data)):
                raise ValueError(f"NaN action at step {t}")
            acts[:, t] = agent.raw_action(out.action.data)
            env_next[:, t] = env.step(states, acts[:, t])
            nxt = env_next[:, t].copy()
            if t + 1 < horizon:
                for i in range(e):
                    if plans[i].decisions[t] and targets[i] is not None:
                        nxt[i] = targets[i].states[t + 1]
            states = nxt
        # Edge sample at the terminal environment state, for bootstrapping.
        enc_state, dist = agent.encoder.step(
            enc_state, agent.obs_of(env_next[:, horizon - 1]))
        zs[:, horizon] = gp.sample_edges(dist, hard=True, rng=rng).data

    trajectories, transitions = [], []
    for i in range(e):
        trajectories.append(envs.Trajectory(fed[i], acts[i]))
        for t in range(horizon):
            transitions.append((fed[i, t], zs[i, t], acts[i, t],
                                env_next[i, t], zs[i, t + 1], t == horizon - 1, None))
    return trajectories, transitions, plans


def interp_transitions(agent, batch, z_seq):
    """Consistent one-step transitions from a blended trajectory."""
    out = []
    for t in range(batch.states.shape[0] - 1):
        out.append((batch.states[t], z_seq[t], batch.actions[t],
                    batch.states[t + 1], z_seq[t + 1], False, batch.alpha))
    return out


# ---------------------------------------------------------------------------
# Discriminator updates

def discriminator_epoch(agent, gen_trajs, exp_trajs, sampler, k_steps, rng):
    """k_steps optimizer updates on the configured adversarial loss;
    blends are regenerated with freshly sampled weights every step.

    Returns (loss trace, list of the blended trajectories used).
    """
    if k_steps == 0:
        return [], []
    if not gen_trajs or not exp_trajs:
        raise ValueError("empty trajectory sets")
    objective = agent.disc.cfg.objective
    gen_pool = [dsc.traj_to_sa(t) for t in gen_trajs]
    exp_pool = [dsc.traj_to_sa(t) for t in exp_trajs]
    gen_s = np.concatenate([s for s, _ in gen_pool])
    gen_a = np.concatenate([a for _, a in gen_pool])
    exp_s = np.concatenate([s for s, _ in exp_pool])
    exp_a = np.concatenate([a for _, a in exp_pool])
    batch = min(agent.run_cfg.sac.batch_size, len(gen_s), len(exp_s))
    trace, interps = [], []
    for _ in range(k_steps):
        gi = rng.integers(len(gen_s), size=batch)
        ei = rng.integers(len(exp_s), size=batch)
        gen_batch = _joint_rows(agent, gen_s[gi], gen_a[gi])
        exp_batch = _joint_rows(agent, exp_s[ei], exp_a[ei])
        if objective == "ss_mse":
            step_interps = []
            for _ in range(agent.run_cfg.n_interp):
                alpha = float(sampler.sample())
                g = gen_trajs[rng.integers(len(gen_trajs))]
                x = exp_trajs[rng.integers(len(exp_trajs))]
                step_interps.append(dsc.interpolate(g, x, alpha))
            nets = [_interp_rows(agent, b) for b in step_interps]
            loss = dsc.ss_loss(agent.disc, gen_batch, exp_batch, nets)
            interps.extend(step_interps)
        elif objective == "gail_bce":
            loss = dsc.gail_bce_loss(agent.disc, gen_batch, exp_batch)
        else:
            loss = dsc.wasserstein_loss(agent.disc, gen_batch, exp_batch,
                                        agent.disc.cfg.gp_coeff, rng)
        trace.append(float(loss.data))
        ad.backward(loss)
        nn.adam_step(agent.opt_disc, agent.disc.params)
        agent.disc_updates += 1
    return trace, interps


def _joint_rows(agent, s_rows, a_rows):
    """Map flattened joint raw rows into the discriminator's input space."""
    spec = agent.env.spec
    b = len(s_rows)
    s = s_rows.reshape(b, spec.n_agents, spec.state_dim)
    a = a_rows.reshape(b, spec.n_agents, spec.action_dim)
    return agent.disc_inputs(s, a)


def _interp_rows(agent, batch):
    s, a = agent.disc_inputs(batch.states, batch.actions)
    return dsc.InterpolatedBatch(batch.alpha, s[:, None, :], a[:, None, :], batch.label)


# ---------------------------------------------------------------------------
# SAC updates

def td_target(r, q_next, logp_next, gamma, entropy_coef):
    """y = r + gamma * (Q_target(s', a') - entropy_coef * log pi(a'|s'))."""
    return r + gamma * (q_next - entropy_coef * logp_next)


def sac_update(agent, buffer, seq_pool, rng):
    """One critic regression step plus one windowed actor/encoder step.

    The critic trains on buffer transitions with rewards recomputed from
    the live discriminator; the actor unrolls the encoder over short
    windows so the edge-type inference receives gradient too.
    """
    sac = agent.run_cfg.sac
    if len(buffer) < sac.batch_size:
        return {"skipped": True, "reason": f"buffer {len(buffer)} < {sac.batch_size}"}
    critic_losses = []
    reward_means = []
    for _ in range(sac.critic_updates):
        batch = buffer.sample(rng, sac.batch_size)
        r = agent.rewards(batch["s"], batch["a"])
        obs = agent.obs_of(batch["s"])
        obs2 = agent.obs_of(batch["s2"])
        with ad.no_grad():
            nxt = agent.actor.act(obs2, batch["z2"], rng=rng)
            q_next = agent.critics.target.q(obs2, batch["z2"], nxt.action)
            logp_next = nxt.log_prob.data.sum(axis=1)
            y = td_target(r, q_next.data[:, 0], logp_next, sac.gamma, agent.entropy_coef)
        q = agent.critics.online.q(obs, batch["z"], agent.act_of(batch["a"]))
        critic_loss = ad.mean(ad.square(q - Tensor(y[:, None])))
        ad.backward(critic_loss)
        nn.adam_step(agent.opt_critic, agent.critics.online.params)
        critic_losses.append(float(critic_loss.data))
        reward_means.append(float(r.mean()))

    actor_stats = _actor_window_update(agent, seq_pool, rng)
    gp.polyak_update(agent.critics)
    agent.policy_updates += 1
    return {"skipped": False, "critic_loss": float(np.mean(critic_losses)),
            "reward_mean": float(np.mean(reward_means)), **actor_stats}


def _actor_window_update(agent, seq_pool, rng):
    """Maximize E[Q(s, a~pi) - entropy_coef * log pi] over short windows of
    recent generated and blended sequences, with the encoder unrolled."""
    sac = agent.run_cfg.sac
    horizon = min(seq.shape[0] for seq in seq_pool)
    w = min(sac.window_len, horizon)
    start = int(rng.integers(0, horizon - w + 1))
    n_seq = min(sac.actor_windows, len(seq_pool))
    picks = rng.choice(len(seq_pool), size=n_seq, replace=len(seq_pool) < n_seq)
    states = np.stack([seq_pool[i][:horizon] for i in picks])  # [B, T, N, d]

    enc_state = agent.encoder.initial_state(n_seq)
    with ad.no_grad():
        for t in range(start):
            enc_state, _ = agent.encoder.step(enc_state, agent.obs_of(states[:, t]))
    enc_state = agent.encoder.detached_state(enc_state)
    objective = None
    for t in range(start, start + w):
        obs = agent.obs_of(states[:, t])
        enc_state, dist = agent.encoder.step(enc_state, obs)
        z = gp.sample_edges(dist, hard=False, rng=rng)
        out = agent.actor.act(obs, z, rng=rng)
        q = agent.critics.online.q(obs, z, out.action)
        logp = ad.sum_(out.log_prob, axis=1)
        term = ad.mean(q) - agent.entropy_coef * ad.mean(logp)
        objective = term if objective is None else objective + term
    objective = objective * (1.0 / w)
    ad.backward(-objective)
    nn.adam_step(agent.opt_actor, agent.actor.params)
    nn.adam_step(agent.opt_encoder, agent.encoder.params)
    # The window loss also reached the critic; those gradients are discarded.
    agent.critics.online.params.zero_grad()
    return {"actor_objective": float(objective.data)}


# ---------------------------------------------------------------------------
# Evaluation metrics

def training_error(gen_trajs, expert_modes):
    """Mean over episodes of the min-over-modes mean squared state error."""
    if not expert_modes:
        raise ValueError("no expert modes")
    errs = []
    for traj in gen_trajs:
        per_mode = []
        for mode in expert_modes:
            t = min(traj.horizon, mode.horizon)
            per_mode.append(float(np.mean((traj.states[:t] - mode.states[:t]) ** 2)))
        errs.append(min(per_mode))
    return float(np.mean(errs))


def mode_coverage(gen_trajs, expert_modes, return_trajectory_distance=False):
    """Assign each episode to the nearest mode by final-state distance.

    Returns (per-mode frequencies, mean endpoint distance to the nearest
    mode). With return_trajectory_distance, a third value gives the mean
    over episodes of the time-averaged pointwise distance to the assigned
    mode, which measures tracking along the whole path rather than only
    where it ends.
    """
    if len(expert_modes) < 2:
        raise ValueError("mode coverage needs at least two modes")
    counts = np.zeros(len(expert_modes))
    end_dists, traj_dists = [], []
    for traj in gen_trajs:
        per_mode = [float(np.linalg.norm(traj.states[-1] - m.states[-1], axis=1).mean())
                    for m in expert_modes]
        best = int(np.argmin(per_mode))
        counts[best] += 1
        end_dists.append(per_mode[best])
        mode = expert_modes[best]
        t = min(traj.horizon, mode.horizon)
        traj_dists.append(float(np.linalg.norm(
            traj.states[:t] - mode.states[:t], axis=2).mean()))
    freqs = counts / max(len(gen_trajs), 1)
    if return_trajectory_distance:
        return freqs, float(np.mean(end_dists)), float(np.mean(traj_dists))
    return freqs, float(np.mean(end_dists))


class PolicyRunner:
    """Stateful rollout interface over a trained encoder/actor pair."""

    def __init__(self, encoder, actor, normalizer, v_max, dt=0.1):
        self.encoder = encoder
        self.actor = actor
        self.normalizer = normalizer
        self.v_max = v_max
        self.dt = dt
        self._state = None
        self._rng = None

    def begin(self, n_episodes, seed):
        self._state = self.encoder.initial_state(n_episodes)
        self._rng = _seeded(seed)

    def act(self, states, deterministic=True):
        """Raw-space actions for raw-space observed states [E, N, d]."""
        limit = self.encoder.cfg.input_limit
        obs = np.clip(self.normalizer.transform(states), -limit, limit)
        with ad.no_grad():
            self._state, dist = self.encoder.step(self._state, obs)
            z = gp.sample_edges(dist, hard=True, rng=self._rng)
            out = self.actor.act(obs, z, rng=self._rng, deterministic=deterministic)
        return out.action.data * self.v_max


def eval_rollouts(agent, n_episodes, seed):
    """Deterministic free-running rollouts for validation metrics."""
    runner = PolicyRunner(agent.encoder, agent.actor, agent.normalizer,
                          agent.env.spec.v_max, agent.env.spec.dt)
    env = agent.env
    horizon = env.spec.horizon
    reset_rng = _seeded(seed, 77)
    states = np.stack([env.reset(reset_rng) for _ in range(n_episodes)])
    runner.begin(n_episodes, _seeded(seed, 78).integers(2 ** 31))
    fed = np.zeros((n_episodes, horizon) + states.shape[1:])
    acts = np.zeros((n_episodes, horizon, env.spec.n_agents, env.spec.action_dim))
    for t in range(horizon):
        fed[:, t] = states
        acts[:, t] = runner.act(states, deterministic=False)
        states = env.step(states, acts[:, t])
    return [envs.Trajectory(fed[i], acts[i]) for i in range(n_episodes)]


def compounding_error(runner, dataset, noise_sigma, horizons, prefix, seed):
    """Roll the policy from ground-truth prefixes with noisy observations;
    mean squared deviation from the ground truth at each horizon."""
    horizons = list(horizons)
    if not dataset:
        raise ValueError("empty dataset")
    max_h = max(horizons)
    t_len = min(t.horizon for t in dataset)
    if prefix + max_h > t_len:
        raise ValueError(f"horizon {max_h} with prefix {prefix} exceeds "
                         f"trajectory length {t_len}")
    rng = _seeded(seed, 101)
    e = len(dataset)
    gt = np.stack([t.states[:t_len] for t in dataset])
    noisy = gt + (rng.normal(0.0, noise_sigma, size=gt.shape) if noise_sigma > 0 else 0.0)
    runner.begin(e, _seeded(seed, 102).integers(2 ** 31))
    # Warm up on observed ground truth.
    for t in range(prefix - 1):
        runner.act(noisy[:, t])
    current = gt[:, prefix - 1]
    errors = np.zeros(len(horizons))
    for h in range(1, max_h + 1):
        obs = current + (rng.normal(0.0, noise_sigma, size=current.shape)
                         if noise_sigma > 0 else 0.0)
        actions = runner.act(obs)
        current = current + runner.dt * np.clip(actions, -runner.v_max, runner.v_max)
        if h in horizons:
            target = gt[:, prefix - 1 + h]
            errors[horizons.index(h)] = float(np.mean((current - target) ** 2))
    return errors


def landscape_grid(disc, normalizer, v_max, region, resolution,
                   base_states, base_actions, agent_idx=0):
    """Score a resolution x resolution slice of one agent's position.

    base_states/base_actions fix all other coordinates; returns rows of
    (x, y, score).
    """
    x0, y0, x1, y1 = region
    if x0 == x1 or y0 == y1:
        raise ValueError("zero-area region")
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    n_pts = resolution * resolution
    states = np.repeat(np.asarray(base_states, dtype=np.float64)[None], n_pts, axis=0)
    actions = np.repeat(np.asarray(base_actions, dtype=np.float64)[None], n_pts, axis=0)
    grid_x, grid_y = np.meshgrid(xs, ys, indexing="ij")
    states[:, agent_idx, 0] = grid_x.ravel()
    states[:, agent_idx, 1] = grid_y.ravel()
    limit = 1.5
    s_rows = np.clip(normalizer.transform(states), -limit, limit).reshape(n_pts, -1)
    a_rows = (actions / v_max).reshape(n_pts, -1)
    scores = dsc.reward(disc, s_rows, a_rows)
    return np.column_stack([grid_x.ravel(), grid_y.ravel(), scores])


def save_landscape_csv(path, grid):
    with open(path, "w") as fh:
        fh.write("x,y,score\n")
        for x, y, s in grid:
            fh.write(f"{x:.17g},{y:.17g},{s:.17g}\n")


# ---------------------------------------------------------------------------
# Environment/dataset assembly

def build_environment(run_cfg):
    """Returns (env, expert trajectories, mode trajectories)."""
    if run_cfg.env == "yjunction":
        env = envs.YJunctionEnv()
        rng = np.random.default_rng([4242])
        # Mode-balanced demonstration set; jitter still varies per episode.
        experts = [envs.yjunction_expert(rng, mode=i % 2)
                   for i in range(run_cfg.n_expert_episodes)]
        modes = envs.yjunction_modes()
        return env, experts, modes
    if run_cfg.env == "letters":
        env_traj = envs.letters_expert(envs.ML_LETTERS)
        experts = [env_traj]
        env = envs.IntegratorEnv(experts, v_max=4.0)
        return env, experts, experts
    if run_cfg.env == "dataset":
        experts, _ = envs.load_trajectories(run_cfg.dataset_path, normalize=False)
        v_max = float(np.abs(np.stack([t.actions for t in experts])).max() * 1.3 + 0.1)
        env = envs.IntegratorEnv(experts, v_max=v_max)
        return env, experts, experts
    raise ValueError(f"unknown env {run_cfg.env!r}")


def fit_normalizer(experts):
    states = np.concatenate([t.states.reshape(-1, t.states.shape[2]) for t in experts])
    return envs.Normalizer.fit(states)


# ---------------------------------------------------------------------------
# Metrics io

def format_row(values):
    cells = []
    for v in values:
        cells.append(str(v) if isinstance(v, (int, np.integer)) else f"{v:.17g}")
    return ",".join(cells)


def metrics_header(horizons):
    return ",".join(METRIC_COLUMNS + tuple(f"comp_err_h{h}" for h in horizons))


# ---------------------------------------------------------------------------
# Checkpoints

def save_agent(path, agent, epoch, seed):
    meta = {"run_cfg": agent.run_cfg.to_dict(), "epoch": epoch, "seed": seed}
    nn.save_checkpoint(
        path,
        {"encoder": agent.encoder.params, "actor": agent.actor.params,
         "critic": agent.critics.online.params,
         "critic_target": agent.critics.target.params,
         "disc": agent.disc.params},
        extra_arrays={"normalizer/lo": agent.normalizer.lo,
                      "normalizer/hi": agent.normalizer.hi},
        meta=meta)


def load_agent(path):
    """Rebuild a full agent (networks, normalizer, env) from a checkpoint."""
    meta, arrays = nn.load_checkpoint(path)
    run_cfg = RunConfig.from_dict(meta["run_cfg"])
    env, experts, modes = build_environment(run_cfg)
    normalizer = envs.Normalizer(arrays["normalizer/lo"], arrays["normalizer/hi"])
    agent = Agent(run_cfg, env, normalizer, meta["seed"])
    agent.encoder.params.load_arrays(nn.arrays_for_set(arrays, "encoder"))
    agent.actor.params.load_arrays(nn.arrays_for_set(arrays, "actor"))
    agent.critics.online.params.load_arrays(nn.arrays_for_set(arrays, "critic"))
    agent.critics.target.params.load_arrays(nn.arrays_for_set(arrays, "critic_target"))
    agent.disc.params.load_arrays(nn.arrays_for_set(arrays, "disc"))
    return agent, experts, modes


# ---------------------------------------------------------------------------
# The outer loop

def train_one_seed(run_cfg, seed):
    """Full training run for one seed; writes metrics CSV and the best
    checkpoint (by validation training error). Returns a summary dict."""
    os.makedirs(run_cfg.out_dir, exist_ok=True)
    env, experts, modes = build_environment(run_cfg)
    normalizer = fit_normalizer(experts)
    agent = Agent(run_cfg, env, normalizer, seed)
    sampler = dsc.AlphaSampler(run_cfg.alpha_mode, seed=[seed, 0xA1FA])
    rng = _seeded(seed, 0x7EA)
    spec = env.spec
    buffer = ReplayBuffer(run_cfg.buffer_capacity, spec.n_agents,
                          spec.state_dim, spec.action_dim, run_cfg.k_edge_types)
    seq_pool = []

    schedule = None
    if run_cfg.curriculum_enabled and run_cfg.curriculum_beta_frac > 0:
        schedule = cur.schedule_from_fraction(run_cfg.curriculum_beta_frac,
                                              run_cfg.epochs, run_cfg.curriculum_base)

    metrics_path = os.path.join(run_cfg.out_dir, f"metrics_seed{seed}.csv")
    ckpt_path = os.path.join(run_cfg.out_dir, f"checkpoint_seed{seed}.bin")
    horizons = list(run_cfg.eval_horizons)
    sac = run_cfg.sac
    best_err = np.inf
    since_best = 0
    initial_err = None
    final_err = None
    rows = []
    epochs_run = 0

    for epoch in range(run_cfg.epochs):
        if sac.entropy_coef_final is not None:
            frac = epoch / max(run_cfg.epochs - 1, 1)
            agent.entropy_coef = (sac.entropy_coef
                                  + frac * (sac.entropy_coef_final - sac.entropy_coef))
        freq = cur.intervention_frequency(schedule, epoch) if schedule else 0.0
        gen_trajs, transitions, plans = collect_rollouts(
            agent, run_cfg.episodes_per_epoch, freq, rng, experts)
        for tr in transitions:
            buffer.add(*tr)
        for traj in gen_trajs:
            seq_pool.append(traj.states)
        k_steps = sac.disc_steps_per_policy_update * sac.policy_updates_per_epoch
        trace, interps = discriminator_epoch(agent, gen_trajs, experts,
                                             sampler, k_steps, rng)
        if interps:
            # A subset is plenty for the replay buffer and the window pool.
            keep = min(len(interps), 3 * run_cfg.episodes_per_epoch)
            picks = rng.choice(len(interps), size=keep, replace=False)
            kept = [interps[int(i)] for i in picks]
            zs = agent.annotate_graphs(np.stack([b.states for b in kept]), rng)
            for j, b in enumerate(kept):
                for tr in interp_transitions(agent, b, zs[j]):
                    buffer.add(*tr)
                seq_pool.append(b.states)
        while len(seq_pool) > run_cfg.seq_pool_size:
            seq_pool.pop(0)
        update_stats = []
        for _ in range(sac.policy_updates_per_epoch):
            update_stats.append(sac_update(agent, buffer, seq_pool, rng))

        eval_trajs = eval_rollouts(agent, run_cfg.eval_episodes, [seed, epoch])
        err = training_error(eval_trajs, modes)
        if len(modes) >= 2:
            freqs, _ = mode_coverage(eval_trajs, modes)
            coverage = float(freqs.min())
        else:
            coverage = 1.0
        pol_obj = float(np.mean([agent.rewards(t.states, t.actions).mean()
                                 for t in eval_trajs]))
        runner = PolicyRunner(agent.encoder, agent.actor, normalizer,
                              spec.v_max, spec.dt)
        comp_subset = experts[:run_cfg.compounding_episodes]
        comp = compounding_error(runner, comp_subset, run_cfg.noise_sigma,
                                 horizons, run_cfg.compounding_prefix, [seed, epoch])
        seg_lengths = [p.mean_segment_length for p in plans]
        row = [epoch, seed, err,
               float(np.mean(trace)) if trace else 0.0,
               pol_obj, coverage, freq, float(np.mean(seg_lengths))]
        row.extend(comp.tolist())
        rows.append(format_row(row))
        epochs_run = epoch + 1
        if initial_err is None:
            initial_err = err
        final_err = err
        if err < best_err:
            best_err = err
            since_best = 0
            save_agent(ckpt_path, agent, epoch, seed)
        else:
            since_best += 1
            if since_best >= run_cfg.early_stop_patience:
                break

    with open(metrics_path, "w") as fh:
        fh.write(metrics_header(horizons) + "\n")
        fh.write("\n".join(rows) + "\n")
    return {"seed": seed, "status": "ok", "initial_error": initial_err,
            "final_error": final_err, "best_error": float(best_err),
            "epochs_run": epochs_run, "metrics_path": metrics_path,
            "checkpoint_path": ckpt_path,
            "disc_updates": agent.disc_updates,
            "policy_updates": agent.policy_updates}


def _seed_entry(args):
    cfg_dict, seed = args
    cfg = RunConfig.from_dict(cfg_dict)
    try:
        return train_one_seed(cfg, seed)
    except Exception as exc:  # per-seed containment: other seeds continue
        return {"seed": seed, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def train(run_cfg):
    """Run every seed; failures are contained per seed. Returns summaries."""
    os.makedirs(run_cfg.out_dir, exist_ok=True)
    with open(os.path.join(run_cfg.out_dir, "config.json"), "w") as fh:
        json.dump(run_cfg.to_dict(), fh, indent=2, sort_keys=True)
    jobs = [(run_cfg.to_dict(), seed) for seed in run_cfg.seeds]
    if run_cfg.workers > 1 and len(jobs) > 1:
        import multiprocessing as mp
        with mp.get_context("fork").Pool(min(run_cfg.workers, len(jobs))) as pool:
            summaries = pool.map(_seed_entry, jobs)
    else:
        summaries = [_seed_entry(job) for job in jobs]
    with open(os.path.join(run_cfg.out_dir, "summary.json"), "w") as fh:
        json.dump(summaries, fh, indent=2, sort_keys=True)
    return summaries


# ---------------------------------------------------------------------------
# Behavioral-cloning baseline (comparison arm)

def bc_baseline_train(run_cfg, seed, epochs=None, forcing_beta_frac=0.15):
    """Same architecture trained by multi-step regression to expert next
    states under a scheduled-forcing curriculum. Writes a checkpoint and
    returns (summary, agent)."""
    os.makedirs(run_cfg.out_dir, exist_ok=True)
    env, experts, modes = build_environment(run_cfg)
    if not experts:
        raise ValueError("empty dataset")
    normalizer = fit_normalizer(experts)
    agent = Agent(run_cfg, env, normalizer, seed)
    epochs = epochs or run_cfg.epochs
    schedule = cur.schedule_from_fraction(max(forcing_beta_frac, 1e-9), epochs)
    rng = np.random.default_rng([seed, 0xBC])
    # The regression loss uses deterministic (mean) actions, so the sigma
    # head never receives gradient; optimize only what participates.
    bc_params = nn.ParameterSet()
    for name, t in agent.actor.params.items():
        if not name.startswith("sigma/"):
            bc_params.add(name, t)
    opt_bc = nn.AdamState(bc_params, run_cfg.sac.lr_policy)
    spec = env.spec
    sac = run_cfg.sac
    w = min(sac.window_len, spec.horizon - 1)
    losses = []
    lo = Tensor(normalizer.lo)
    scale = Tensor(2.0 / (normalizer.hi - normalizer.lo))
    limit = agent.pcfg.input_limit

    def obs_tensor(state_t):
        raw = (state_t - lo) * scale - 1.0
        # differentiable clamp into the encoder's accepted range
        return ad.relu(raw + limit) - ad.relu(raw - limit) - limit

    for epoch in range(epochs):
        freq = cur.intervention_frequency(schedule, epoch) if forcing_beta_frac > 0 else 0.0
        n_seq = min(sac.actor_windows, len(experts))
        picks = rng.choice(len(experts), size=n_seq, replace=len(experts) < n_seq)
        t_len = min(experts[i].horizon for i in picks)
        gts = np.stack([experts[i].states[:t_len] for i in picks])
        start = int(rng.integers(0, t_len - w))
        with ad.no_grad():
            enc_state = agent.encoder.initial_state(n_seq)
            for t in range(start):
                enc_state, _ = agent.encoder.step(enc_state, agent.obs_of(gts[:, t]))
        enc_state = agent.encoder.detached_state(enc_state)
        current = Tensor(gts[:, start])
        loss = None
        for t in range(start, start + w):
            obs = obs_tensor(current)
            enc_state, dist = agent.encoder.step(enc_state, obs)
            z = gp.sample_edges(dist, hard=False, rng=rng)
            out = agent.actor.act(obs, z, deterministic=True)
            action = out.action * spec.v_max
            pred = current + action * spec.dt
            target = Tensor(gts[:, t + 1])
            term = ad.mean(ad.square(pred - target))
            loss = term if loss is None else loss + term
            forced = rng.random(n_seq) < freq
            mixer = np.zeros((n_seq, 1, 1))
            mixer[forced] = 1.0
            current = Tensor(gts[:, t + 1]) * Tensor(mixer) + pred * Tensor(1.0 - mixer)
        loss = loss * (1.0 / w)
        losses.append(float(loss.data))
        ad.backward(loss)
        nn.adam_step(opt_bc, bc_params)
        nn.adam_step(agent.opt_encoder, agent.encoder.params)
    ckpt_path = os.path.join(run_cfg.out_dir, f"bc_checkpoint_seed{seed}.bin")
    save_agent(ckpt_path, agent, epochs - 1, seed)
    return {"seed": seed, "losses": losses, "checkpoint_path": ckpt_path}, agent
