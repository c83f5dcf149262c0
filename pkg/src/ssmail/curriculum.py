"""Trajectory Forcing: an exponentially decaying schedule of teacher-forcing
interventions. At epoch e the per-step intervention probability is
base^(-e / beta), so the expected run of self-generated steps between
interventions grows by a factor of `base` every `beta` epochs.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class CurriculumSchedule:
    beta: float                 # epochs per expected-length multiplication
    base: float = 1.5
    total_epochs: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive (use frequency 0 to disable forcing)")
        if self.base <= 1.0:
            raise ValueError("base must exceed 1")


def schedule_from_fraction(beta_fraction, total_epochs, base=1.5):
    """beta given as a fraction of the run length, e.g. 0.15 for 15%."""
    return CurriculumSchedule(beta=beta_fraction * total_epochs, base=base,
                              total_epochs=total_epochs)


def intervention_frequency(sched, epoch):
    """Per-step intervention probability at this epoch, in (0, 1]."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    freq = sched.base ** (-epoch / sched.beta)
    return float(min(freq, 1.0))


def expected_segment_length(sched, epoch):
    """Expected self-generated steps between interventions, 1/frequency."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return float(sched.base ** (epoch / sched.beta))


@dataclass
class ForcingPlan:
    """Per-step intervention decisions for one episode."""
    decisions: np.ndarray        # bool[T]; True means feed the expert state
    frequency: float

    @property
    def segment_lengths(self):
        """Lengths of self-generated runs between interventions."""
        lengths = []
        run = 0
        for forced in self.decisions:
            if forced:
                lengths.append(run)
                run = 0
            else:
                run += 1
        lengths.append(run)
        return lengths

    @property
    def mean_segment_length(self):
        return float(np.mean(self.segment_lengths))


def apply_forcing(horizon, expert_traj, frequency, rng):
    """Draw the per-step Bernoulli(frequency) intervention stream for one
    rollout. A True at step t means the state fed to the policy at t+1 is
    the expert's state there instead of the environment's result."""
    if isinstance(horizon, np.ndarray):
        horizon = len(horizon)
    if expert_traj is not None and expert_traj.horizon < horizon:
        raise ValueError(f"expert trajectory ({expert_traj.horizon} steps) is "
                         f"shorter than the rollout ({horizon})")
    if not 0.0 <= frequency <= 1.0:
        raise ValueError("frequency must lie in [0, 1]")
    decisions = rng.random(horizon) < frequency
    return ForcingPlan(decisions, frequency)
