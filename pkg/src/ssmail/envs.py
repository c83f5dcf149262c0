"""Environments and datasets: the bimodal Y-Junction scenario, planar
letter drawing, a header-tagged CSV trajectory format with [-1, 1]
normalization, Gaussian observation noise, and a smooth synthetic
multi-agent dataset that stands in for motion-capture data.

All dynamics are the same linear integrator s' = s + a * dt, so affine
combinations of valid transitions remain valid transitions.
"""

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class Trajectory:
    """One episode of joint states/actions, shape [T, N, dim]."""
    states: np.ndarray
    actions: np.ndarray
    mode_tag: int | None = None

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        if self.states.ndim != 3 or self.actions.ndim != 3:
            raise ValueError("trajectory arrays must be [T, N, dim]")
        if len(self.states) < 1:
            raise ValueError("trajectory must contain at least one step")
        if self.states.shape[:2] != self.actions.shape[:2]:
            raise ValueError(f"states {self.states.shape} and actions "
                             f"{self.actions.shape} disagree")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.actions))):
            raise ValueError("trajectory contains non-finite values")

    @property
    def horizon(self):
        return self.states.shape[0]

    @property
    def n_agents(self):
        return self.states.shape[1]


@dataclass
class EnvSpec:
    """The MDP tuple minus the reward, which the discriminator supplies."""
    state_dim: int
    action_dim: int
    horizon: int
    n_agents: int
    dt: float = 0.1
    v_max: float = 2.0


def _as_rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def integrator_step(spec, states, actions):
    """Shared dynamics: clip actions to the max speed, integrate one step."""
    actions = np.asarray(actions, dtype=np.float64)
    if np.any(np.isnan(actions)):
        raise ValueError("NaN action")
    clipped = np.clip(actions, -spec.v_max, spec.v_max)
    return np.asarray(states, dtype=np.float64) + spec.dt * clipped


# ---------------------------------------------------------------------------
# Y-Junction: three agents follow a one-way trunk that forks into two
# 45-degree branches; experts commit to one shared branch per episode.

FORK_Y = 0.5
START_YS = (-2.0, -1.0, 0.0)
START_JITTER = 0.1
EXPERT_SPEED = 1.0
BRANCH_DIRS = {0: np.array([-np.sqrt(0.5), np.sqrt(0.5)]),   # left
               1: np.array([np.sqrt(0.5), np.sqrt(0.5)])}    # right
MODE_NAMES = {"left": 0, "right": 1}


class YJunctionEnv:
    """Unbounded plane, linear integrator dynamics, fixed horizon."""

    def __init__(self, horizon=50, dt=0.1, v_max=2.0):
        self.spec = EnvSpec(state_dim=2, action_dim=2, horizon=horizon,
                            n_agents=3, dt=dt, v_max=v_max)

    def reset(self, seed):
        """Agents on the trunk centerline at staggered y, with +-0.1 jitter."""
        rng = _as_rng(seed)
        starts = np.zeros((3, 2))
        starts[:, 1] = START_YS
        starts += rng.uniform(-START_JITTER, START_JITTER, size=(3, 2))
        return starts

    def step(self, states, actions):
        return integrator_step(self.spec, states, actions)


def _polyline_positions(waypoints, arc_positions):
    """Points at the given arc lengths along a waypoint polyline."""
    waypoints = np.asarray(waypoints, dtype=np.float64)
    seg = np.diff(waypoints, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    if np.any(seg_len == 0.0):
        raise ValueError("degenerate polyline: repeated consecutive waypoint")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    pts = np.empty((len(arc_positions), waypoints.shape[1]))
    for i, s in enumerate(arc_positions):
        s = min(max(s, 0.0), total)
        k = min(np.searchsorted(cum, s, side="right") - 1, len(seg) - 1)
        frac = (s - cum[k]) / seg_len[k]
        pts[i] = waypoints[k] + frac * seg[k]
    return pts


def yjunction_expert(seed, mode=None, jitter=True, horizon=50, dt=0.1):
    """Expert episode: up the trunk at unit speed, then along one shared
    45-degree branch. The same mode is used by all three agents."""
    rng = _as_rng(seed)
    if mode is None:
        mode = int(rng.integers(2))
    elif isinstance(mode, str):
        mode = MODE_NAMES[mode]
    branch = BRANCH_DIRS[mode]
    step_arc = EXPERT_SPEED * dt
    path_total = step_arc * horizon
    states = np.zeros((horizon, 3, 2))
    for agent, y0 in enumerate(START_YS):
        start = np.array([0.0, y0])
        if jitter:
            start = start + rng.uniform(-START_JITTER, START_JITTER, size=2)
        fork = np.array([start[0], FORK_Y])
        tip = fork + (path_total + 1.0) * branch
        arcs = step_arc * np.arange(horizon)
        states[:, agent] = _polyline_positions([start, fork, tip], arcs)
    actions = np.empty_like(states)
    actions[:-1] = (states[1:] - states[:-1]) / dt
    actions[-1] = actions[-2]
    return Trajectory(states, actions, mode_tag=mode)


def yjunction_modes(horizon=50, dt=0.1):
    """Canonical (jitter-free) expert trajectory per mode."""
    return [yjunction_expert(0, mode=m, jitter=False, horizon=horizon, dt=dt)
            for m in (0, 1)]


# ---------------------------------------------------------------------------
# Planar letters: one agent per letter, constant-speed polyline traversal.

ML_LETTERS = [
    # M
    [(0.0, 0.0), (0.0, 4.0), (1.5, 2.0), (3.0, 4.0), (3.0, 0.0)],
    # L
    [(4.5, 4.0), (4.5, 0.0), (7.0, 0.0)],
]


def _segment_steps(seg_len, n_steps):
    """Split n_steps across segments proportionally to length (largest
    remainder), at least one step per segment."""
    if n_steps < len(seg_len):
        raise ValueError(f"horizon too short for {len(seg_len)} segments")
    quota = seg_len / seg_len.sum() * n_steps
    counts = np.maximum(np.floor(quota).astype(int), 1)
    while counts.sum() > n_steps:
        counts[np.argmax(counts - quota)] -= 1
    remainder = quota - counts
    while counts.sum() < n_steps:
        idx = np.argmax(remainder)
        counts[idx] += 1
        remainder[idx] = -np.inf
    return counts


def letters_expert(letter_spec, horizon=50, dt=0.1):
    """Near-constant-speed traversal of one polyline per agent. Samples land
    exactly on the waypoints, so endpoints and total path length are
    preserved; speed is uniform within each segment."""
    n_agents = len(letter_spec)
    states = np.zeros((horizon, n_agents, 2))
    for agent, waypoints in enumerate(letter_spec):
        waypoints = np.asarray(waypoints, dtype=np.float64)
        seg = np.diff(waypoints, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len == 0.0):
            raise ValueError("degenerate polyline: repeated consecutive waypoint")
        counts = _segment_steps(seg_len, horizon - 1)
        pts = [waypoints[0]]
        for k, n_k in enumerate(counts):
            fracs = np.arange(1, n_k + 1) / n_k
            pts.extend(waypoints[k] + f * seg[k] for f in fracs)
        states[:, agent] = np.asarray(pts)
    actions = np.empty_like(states)
    actions[:-1] = (states[1:] - states[:-1]) / dt
    actions[-1] = actions[-2]
    return Trajectory(states, actions)


# ---------------------------------------------------------------------------
# Synthetic smooth multi-agent dataset (motion-capture stand-in)

def make_swirl_dataset(seed, n_episodes, horizon=50, n_agents=3, dt=0.1):
    """Episodes of agents orbiting a drifting shared center with distinct
    radii and phases; smooth, strongly coupled, and integrator-consistent."""
    rng = _as_rng(seed)
    trajs = []
    for _ in range(n_episodes):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        omega = rng.uniform(0.6, 1.0)
        drift = rng.uniform(-0.4, 0.4, size=2)
        center0 = rng.uniform(-0.5, 0.5, size=2)
        radii = 0.6 + 0.4 * np.arange(1, n_agents + 1)
        t = dt * np.arange(horizon)
        states = np.zeros((horizon, n_agents, 2))
        for agent in range(n_agents):
            ang = omega * t + phase + 2.0 * np.pi * agent / n_agents
            center = center0[None, :] + drift[None, :] * t[:, None]
            states[:, agent, 0] = center[:, 0] + radii[agent] * np.cos(ang)
            states[:, agent, 1] = center[:, 1] + radii[agent] * np.sin(ang)
        actions = np.empty_like(states)
        actions[:-1] = (states[1:] - states[:-1]) / dt
        actions[-1] = actions[-2]
        trajs.append(Trajectory(states, actions))
    return trajs


class IntegratorEnv:
    """Generic environment over a trajectory dataset: initial states come
    from episode starts, dynamics are the shared integrator."""

    def __init__(self, dataset, dt=0.1, v_max=2.0):
        if not dataset:
            raise ValueError("empty dataset")
        first = dataset[0]
        self.dataset = list(dataset)
        self.spec = EnvSpec(state_dim=first.states.shape[2],
                            action_dim=first.actions.shape[2],
                            horizon=first.horizon, n_agents=first.n_agents,
                            dt=dt, v_max=v_max)

    def reset(self, seed):
        rng = _as_rng(seed)
        idx = int(rng.integers(len(self.dataset)))
        return self.dataset[idx].states[0].copy()

    def step(self, states, actions):
        return integrator_step(self.spec, states, actions)


# ---------------------------------------------------------------------------
# Normalization

class Normalizer:
    """Per-dimension affine map of the fitted data range onto [-1, 1]."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if np.any(self.hi <= self.lo):
            raise ValueError("normalizer needs max > min in every dimension")

    @classmethod
    def fit(cls, states):
        """Fit on states of shape [..., d]."""
        flat = np.asarray(states, dtype=np.float64).reshape(-1, np.shape(states)[-1])
        return cls(flat.min(axis=0), flat.max(axis=0))

    def transform(self, x):
        return 2.0 * (np.asarray(x) - self.lo) / (self.hi - self.lo) - 1.0

    def inverse(self, x):
        return (np.asarray(x) + 1.0) * (self.hi - self.lo) / 2.0 + self.lo


# ---------------------------------------------------------------------------
# Trajectory CSV format
#
# Header: episode,t,agent,s0..s{ds-1},a0..a{da-1},mode
# Rows sorted by (episode, t, agent); floats at 17 significant digits so
# float64 values round-trip exactly. mode is -1 when untagged.

def _header(d_s, d_a):
    return (["episode", "t", "agent"]
            + [f"s{i}" for i in range(d_s)]
            + [f"a{i}" for i in range(d_a)]
            + ["mode"])


def save_trajectories(path, trajs):
    if not trajs:
        raise ValueError("refusing to write an empty trajectory set")
    d_s = trajs[0].states.shape[2]
    d_a = trajs[0].actions.shape[2]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_header(d_s, d_a))
        for ep, traj in enumerate(trajs):
            mode = -1 if traj.mode_tag is None else int(traj.mode_tag)
            for t in range(traj.horizon):
                for agent in range(traj.n_agents):
                    row = [ep, t, agent]
                    row += [f"{v:.17g}" for v in traj.states[t, agent]]
                    row += [f"{v:.17g}" for v in traj.actions[t, agent]]
                    row.append(mode)
                    writer.writerow(row)


def load_trajectories(path, normalize=True):
    """Parse a trajectory CSV; returns (trajectories, normalizer).

    The normalizer is fit on the full state set. With normalize=True
    (the default) the returned states are already mapped into [-1, 1].
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty trajectory file") from None
        d_s = sum(1 for name in header if name.startswith("s") and name[1:].isdigit())
        d_a = sum(1 for name in header if name.startswith("a") and name[1:].isdigit())
        if header != _header(d_s, d_a):
            raise ValueError(f"{path}: unrecognized header {header}")
        episodes = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected "
                                 f"{len(header)} fields, got {len(row)}")
            try:
                ep, t, agent = int(row[0]), int(row[1]), int(row[2])
                values = [float(v) for v in row[3:-1]]
                mode = int(row[-1])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: malformed row") from None
            episodes.setdefault(ep, {})[(t, agent)] = (values, mode)
    if not episodes:
        raise ValueError(f"{path}: no data rows")

    trajs = []
    for ep in sorted(episodes):
        cells = episodes[ep]
        ts = sorted({t for t, _ in cells})
        agents = sorted({a for _, a in cells})
        if ts != list(range(len(ts))) or agents != list(range(len(agents))):
            raise ValueError(f"{path}: episode {ep} has missing (t, agent) cells")
        states = np.zeros((len(ts), len(agents), d_s))
        actions = np.zeros((len(ts), len(agents), d_a))
        mode = None
        for (t, agent), (values, m) in cells.items():
            states[t, agent] = values[:d_s]
            actions[t, agent] = values[d_s:]
            mode = None if m < 0 else m
        trajs.append(Trajectory(states, actions, mode_tag=mode))

    first = trajs[0]
    for i, traj in enumerate(trajs):
        if traj.n_agents != first.n_agents or traj.states.shape[2] != first.states.shape[2]:
            raise ValueError(f"{path}: episode {i} has inconsistent agent count "
                             "or state dimension")
    normalizer = Normalizer.fit(np.concatenate([t.states.reshape(-1, d_s) for t in trajs]))
    if normalize:
        trajs = [Trajectory(normalizer.transform(t.states), t.actions, t.mode_tag)
                 for t in trajs]
    return trajs, normalizer


def inject_noise(traj, sigma, seed):
    """i.i.d. zero-mean Gaussian on every observed state component."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return Trajectory(traj.states.copy(), traj.actions.copy(), traj.mode_tag)
    rng = _as_rng(seed)
    noisy = traj.states + rng.normal(0.0, sigma, size=traj.states.shape)
    return Trajectory(noisy, traj.actions.copy(), traj.mode_tag)
