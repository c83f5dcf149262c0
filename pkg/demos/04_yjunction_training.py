"""A small end-to-end adversarial imitation run on the Y-Junction.

One seed, reduced sizes: expect a few minutes on one core. The printed
trace shows the validation error falling as the policy locks onto the
expert branches; artifacts land in runs/demo_yjunction/.

Run:  python3 demos/04_yjunction_training.py
"""

import csv

import numpy as np

from ssmail import trainer
from ssmail.trainer import eval_rollouts, mode_coverage

cfg = trainer.RunConfig(
    seeds=(0,),
    epochs=60,
    hidden=32, enc_hidden=24, n_hidden_layers=1,
    episodes_per_epoch=6, eval_episodes=8, n_expert_episodes=16,
    out_dir="runs/demo_yjunction",
    sac=trainer.SACConfig(batch_size=128, policy_updates_per_epoch=6,
                          critic_updates=2, disc_steps_per_policy_update=5,
                          actor_windows=6, window_len=8,
                          entropy_coef=0.05, polyak_rho=0.98,
                          lr_critic=1e-3, lr_disc=1e-3),
)

summary = trainer.train_one_seed(cfg, seed=0)
print(f"\ninitial error {summary['initial_error']:.3f} -> "
      f"best {summary['best_error']:.3f} over {summary['epochs_run']} epochs")

with open(summary["metrics_path"]) as fh:
    rows = list(csv.DictReader(fh))
print("\nepoch  train_err  disc_loss  E[D]   forcing")
for row in rows[::8]:
    print(f"{int(row['epoch']):5d}  {float(row['training_error']):9.3f}"
          f"  {float(row['discriminator_loss']):9.3f}"
          f"  {float(row['policy_objective']):5.2f}"
          f"  {float(row['forcing_frequency']):7.3f}")

agent, experts, modes = trainer.load_agent(summary["checkpoint_path"])
trajs = eval_rollouts(agent, 20, [7])
freqs, dist = mode_coverage(trajs, modes)
print(f"\n20 fresh rollouts: branch frequencies {freqs}, "
      f"mean endpoint distance to nearest mode {dist:.3f}")
print(f"metrics: {summary['metrics_path']}")
print(f"checkpoint: {summary['checkpoint_path']}")
