"""Per-iteration full/low mode selection and the step learning-rate schedule.

Epochs and iterations are 1-based. Every mode draw is a pure function of
``(seed, epoch, iteration)``, so a run can be resumed mid-way and replayed
without carrying RNG state around.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

MODE_STREAM = 0x10E  # keeps mode draws independent of data shuffling


@dataclass
class LrSchedule:
    base_lr: float = 0.1
    milestones: list = field(default_factory=list)  # [(epoch, lr), ...]

    def __post_init__(self):
        self.milestones = [(int(e), float(lr)) for e, lr in self.milestones]
        epochs = [e for e, _ in self.milestones]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError(f"lr milestones must be strictly increasing in epoch, got {epochs}", key="lr_milestones")
        if self.base_lr <= 0 or any(lr <= 0 for _, lr in self.milestones):
            raise ConfigError("learning rates must be positive", key="lr_base")

    @property
    def adjust_epochs(self):
        return [e for e, _ in self.milestones]


def lr_at(schedule, epoch):
    lr = schedule.base_lr
    for e, value in schedule.milestones:
        if epoch >= e:
            lr = value
    return lr


@dataclass
class ModeSchedule:
    """Low-mode probability per epoch plus the forced full-mode windows.

    ``probs[e - 1]`` is the nominal probability for epoch ``e``. The
    ``forced_full_window`` epochs starting at each learning-rate adjustment
    (and at epoch 1 when ``force_at_start``) run full mode only.
    ``policy`` is ``"stochastic"`` (Bernoulli draws) or ``"deterministic"``
    (every ``period``-th iteration runs low).
    """

    probs: list
    forced_full_window: int = 4
    lr_adjust_epochs: list = field(default_factory=list)
    policy: str = "stochastic"
    period: int = 2
    seed: int = 0
    force_at_start: bool = True

    def __post_init__(self):
        self.probs = [float(p) for p in self.probs]
        if not self.probs:
            raise ConfigError("mode schedule needs at least one epoch", key="p_low")
        for p in self.probs:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"p_low must lie in [0, 1], got {p}", key="p_low")
        if self.forced_full_window < 0:
            raise ConfigError("forced_full_window must be >= 0", key="forced_full_window")
        if self.policy not in ("stochastic", "deterministic"):
            raise ConfigError(f"policy must be 'stochastic' or 'deterministic', got {self.policy!r}", key="policy")
        if self.period < 1:
            raise ConfigError("period must be >= 1", key="period")
        self.lr_adjust_epochs = sorted(int(e) for e in self.lr_adjust_epochs)

    @classmethod
    def constant(cls, p, epochs, **kw):
        return cls([p] * epochs, **kw)

    @property
    def epochs(self):
        return len(self.probs)

    def forced_starts(self):
        starts = list(self.lr_adjust_epochs)
        if self.force_at_start:
            starts.insert(0, 1)
        return starts

    def in_forced_window(self, epoch):
        return any(0 <= epoch - a < self.forced_full_window for a in self.forced_starts())


def effective_prob(schedule, epoch):
    if not 1 <= epoch <= schedule.epochs:
        raise ValueError(f"epoch {epoch} outside [1, {schedule.epochs}]")
    if schedule.in_forced_window(epoch):
        return 0.0
    return schedule.probs[epoch - 1]


def next_mode(schedule, epoch, iteration):
    """'low' or 'full' for 1-based ``iteration`` of ``epoch``."""
    p = effective_prob(schedule, epoch)
    if p <= 0.0:
        return "full"
    if schedule.policy == "deterministic":
        return "low" if iteration % schedule.period == 0 else "full"
    if p >= 1.0:
        return "low"
    u = np.random.default_rng([schedule.seed, MODE_STREAM, epoch, iteration]).random()
    return "low" if u < p else "full"


def mode_stream(schedule, epoch, iterations):
    return [next_mode(schedule, epoch, t) for t in range(1, iterations + 1)]
