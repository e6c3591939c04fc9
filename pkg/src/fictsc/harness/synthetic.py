"""Controlled train/test domain shift on sinusoidal class waveforms."""

from dataclasses import asdict, dataclass, field

import numpy as np

from fictsc.data import TimeSeriesDataset


@dataclass
class SyntheticShiftRecipe:
    """Class ``c`` channel ``j`` is ``level + amp * sin(2 pi f t / T + phase_j)`` with
    per-sample phase and amplitude jitter plus Gaussian noise.  Test samples are
    then mapped to ``(1 + scale_drift * u) * x + offset`` with ``u ~ U(-1, 1)``.

    ``frequencies``, ``amplitudes`` and ``levels`` hold one value per class.  The
    defaults give three classes that share a level and differ in frequency and
    amplitude (classes 0 and 1 only in amplitude); the phase is uniformly random so
    class identity lives in the spectrum, not in the alignment.
    """

    classes: int = 3
    channels: int = 2
    length: int = 96
    offset: float = 1.5
    scale_drift: float = 0.3
    noise: float = 0.5
    n_train: int = 300
    n_test: int = 300
    seed: int = 0
    frequencies: list = field(default_factory=lambda: [3.0, 3.0, 5.0])
    amplitudes: list = field(default_factory=lambda: [1.0, 2.0, 1.5])
    levels: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    phase_jitter: float = np.pi
    amplitude_jitter: float = 0.2

    def validate(self):
        if min(self.classes, self.channels, self.length, self.n_train, self.n_test) < 1:
            raise ValueError("recipe sizes must be positive")
        if self.noise < 0 or self.scale_drift < 0 or self.scale_drift >= 1:
            raise ValueError("noise must be >= 0 and scale_drift in [0, 1)")
        for name in ("frequencies", "amplitudes", "levels"):
            if len(getattr(self, name)) != self.classes:
                raise ValueError(f"{name} needs one value per class")

    def waveform_table(self):
        return tuple(np.asarray(getattr(self, k), dtype=np.float64)
                     for k in ("frequencies", "amplitudes", "levels"))

    def as_dict(self):
        return asdict(self)


# the canonical benchmark instance
CANONICAL = SyntheticShiftRecipe()


def _draw(recipe, n, rng):
    C, d, T = recipe.classes, recipe.channels, recipe.length
    freqs, amps, levels = recipe.waveform_table()
    labels = np.arange(n) % C
    rng.shuffle(labels)
    t = np.arange(T) / T
    channel_phase = np.pi * np.arange(d) / max(d, 1)
    phase = rng.uniform(-recipe.phase_jitter, recipe.phase_jitter, size=(n, 1, 1))
    amp = amps[labels][:, None, None] * (1.0 + recipe.amplitude_jitter * rng.uniform(-1, 1, size=(n, 1, 1)))
    arg = 2 * np.pi * freqs[labels][:, None, None] * t[None, None, :] + channel_phase[None, :, None] + phase
    x = levels[labels][:, None, None] + amp * np.sin(arg)
    x = x + recipe.noise * rng.normal(size=(n, d, T))
    return x, labels


def generate_synthetic_shift(recipe=CANONICAL):
    """Return (train, test) datasets; deterministic in ``recipe.seed``."""
    recipe.validate()
    names = [f"c{c}" for c in range(recipe.classes)]
    train_x, train_y = _draw(recipe, recipe.n_train, np.random.default_rng([recipe.seed, 0]))
    rng = np.random.default_rng([recipe.seed, 1])
    test_x, test_y = _draw(recipe, recipe.n_test, rng)
    scale = 1.0 + recipe.scale_drift * rng.uniform(-1, 1, size=(recipe.n_test, 1, 1))
    test_x = scale * test_x + recipe.offset
    train = TimeSeriesDataset(train_x, train_y, names, split="train", name="synthetic-shift")
    test = TimeSeriesDataset(test_x, test_y, names, split="test", name="synthetic-shift")
    return train, test
