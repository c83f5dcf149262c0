"""The self-supervised reward ramp, on frozen batches.

Trains the discriminator to regress blend weights on fixed generated vs
expert trajectory pools, then prints its scores along the blend axis:
the ramp rises from 0 (generated) to 1 (expert) and, with the extended
sampling range, drops again past the expert.

Run:  python3 demos/02_reward_ramp.py
"""

import numpy as np

from ssmail import autodiff as ad
from ssmail import discriminator as dsc
from ssmail import envs, nn

rng = np.random.default_rng(0)
env = envs.YJunctionEnv()

# Generated pool: random walks. Expert pool: proper Y-Junction experts.
def random_walk(seed):
    r = np.random.default_rng(seed)
    s = env.reset(r)
    states, actions = [], []
    for _ in range(env.spec.horizon):
        a = r.uniform(-1, 1, (3, 2))
        states.append(s)
        actions.append(a)
        s = env.step(s, a)
    return envs.Trajectory(np.asarray(states), np.asarray(actions))

gen = [random_walk(s) for s in range(4)]
exp = [envs.yjunction_expert(s) for s in range(4)]

cfg = dsc.DiscConfig(objective="ss_mse", state_dim=6, action_dim=6, hidden=32)
disc = dsc.Discriminator(rng, cfg)
sampler = dsc.AlphaSampler("extended", seed=1)   # alpha in [-1, 1.5]
adam = nn.AdamState(disc.params, learning_rate=1e-3)

def rows(trajs):
    pairs = [dsc.traj_to_sa(t) for t in trajs]
    return np.concatenate([s for s, _ in pairs]), np.concatenate([a for _, a in pairs])

gen_sa, exp_sa = rows(gen), rows(exp)
for step in range(1500):
    blends = []
    for _ in range(4):
        a = float(sampler.sample())
        blends.append(dsc.interpolate(gen[rng.integers(4)], exp[rng.integers(4)], a))
    loss = dsc.ss_loss(disc, gen_sa, exp_sa, blends)
    ad.backward(loss)
    nn.adam_step(adam, disc.params)
    if step % 300 == 0:
        print(f"step {step:4d}  loss {float(loss.data):.4f}")

print("\nscores along the blend axis (label in parentheses):")
for a in [-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.2, 1.4]:
    vals = []
    for g in gen:
        for e in exp:
            b = dsc.interpolate(g, e, a)
            s = b.states.reshape(b.states.shape[0], -1)
            act = b.actions.reshape(b.actions.shape[0], -1)
            vals.append(dsc.reward(disc, s, act).mean())
    print(f"  alpha {a:+.2f} (label {dsc.ss_label(a):+.2f}) -> D = {np.mean(vals):+.3f}")
print("\nNote the drop past alpha = 1: scores beyond the expert fall back toward 0.")
