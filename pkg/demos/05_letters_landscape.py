"""Reward landscape for the planar-letters task.

Two agents draw "ML"; the discriminator is trained with the extended
blend range [-1, 1.5] against random-walk rollouts, then scored on a
position grid and exported as a landscape CSV. If the ssmail-plots
package is installed, a heatmap is rendered too.

Run:  python3 demos/05_letters_landscape.py
"""

import os

import numpy as np

from ssmail import autodiff as ad
from ssmail import discriminator as dsc
from ssmail import envs, nn, trainer

rng = np.random.default_rng(0)
expert = envs.letters_expert(envs.ML_LETTERS)
normalizer = envs.Normalizer.fit(expert.states.reshape(-1, 2))
v_max = 4.0

# Generated pool: random walks started from the letter origins.
def random_walk(seed):
    r = np.random.default_rng(seed)
    s = expert.states[0] + r.uniform(-0.5, 0.5, size=(2, 2)) - [0.0, 3.0]
    states, actions = [], []
    for _ in range(expert.horizon):
        a = r.uniform(-1.5, 1.5, (2, 2))
        states.append(s.copy())
        actions.append(a)
        s = s + 0.1 * a
    return envs.Trajectory(np.asarray(states), np.asarray(actions))

gen = [random_walk(s) for s in range(6)]
cfg = dsc.DiscConfig(objective="ss_mse", state_dim=4, action_dim=4, hidden=48)
disc = dsc.Discriminator(rng, cfg)
sampler = dsc.AlphaSampler("extended", seed=1)
adam = nn.AdamState(disc.params, learning_rate=1e-3)

def net_rows(traj):
    s = np.clip(normalizer.transform(traj.states), -1.5, 1.5)
    return s.reshape(traj.horizon, -1), (traj.actions / v_max).reshape(traj.horizon, -1)

exp_rows = net_rows(expert)
for step in range(2000):
    g = gen[rng.integers(len(gen))]
    gen_rows = net_rows(g)
    blends = []
    for _ in range(4):
        a = float(sampler.sample())
        b = dsc.interpolate(g, expert, a)
        s = np.clip(normalizer.transform(b.states), -1.5, 1.5).reshape(b.states.shape[0], -1)
        act = (b.actions / v_max).reshape(b.actions.shape[0], -1)
        blends.append(dsc.InterpolatedBatch(b.alpha, s[:, None, :], act[:, None, :], b.label))
    loss = dsc.ss_loss(disc, gen_rows, exp_rows, blends)
    ad.backward(loss)
    nn.adam_step(adam, disc.params)
    if step % 500 == 0:
        print(f"step {step:4d}  loss {float(loss.data):.4f}")

os.makedirs("runs/demo_letters", exist_ok=True)
base_states = expert.states[25].copy()        # mid-stroke configuration
base_actions = expert.actions[25].copy()
for agent_idx, name in [(0, "agent_m"), (1, "agent_l")]:
    grid = trainer.landscape_grid(disc, normalizer, v_max, (-1.5, -1.5, 8.5, 5.5), 50,
                                  base_states, base_actions, agent_idx=agent_idx)
    out = f"runs/demo_letters/landscape_{name}.csv"
    trainer.save_landscape_csv(out, grid)
    print(f"wrote {out} ({len(grid)} points)")

print("\nscores along the blend line (rise to the expert, drop past it):")
for a in [0.0, 0.5, 1.0, 1.25]:
    b = dsc.interpolate(gen[0], expert, a)
    s = np.clip(normalizer.transform(b.states), -1.5, 1.5).reshape(b.states.shape[0], -1)
    act = (b.actions / v_max).reshape(b.actions.shape[0], -1)
    print(f"  alpha {a:+.2f} -> D = {dsc.reward(disc, s, act).mean():+.3f}")

try:
    from ssmail_plots import FigureSpec, compare
    specs = [FigureSpec("landscape", [f"runs/demo_letters/landscape_{n}.csv"],
                        "runs/demo_letters/landscapes.png", {"title": n})
             for n in ("agent_m", "agent_l")]
    info = compare(specs)
    print(f"\nrendered {info['output']}")
except ImportError:
    print("\n(install ssmail-plots to render the heatmap)")
