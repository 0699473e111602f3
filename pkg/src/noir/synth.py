"""Seedable synthetic EEG generators standing in for human subjects.

Three signal families: frequency-tagged visual responses (posterior
channels), motor-imagery band-power modulation (central channels), and
broadband muscle-tension bursts (all channels). All generators are pure
functions of (arguments, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal import DEFAULT_MONTAGE, Epoch, Montage

MI_CLASSES = ("LeftHand", "RightHand", "Legs", "Rest")

# Contralateral mapping: imagining the left hand modulates right-motor
# channels and vice versa; legs map to the midline group.
MI_CLASS_GROUPS = {
    "LeftHand": "motor_right",
    "RightHand": "motor_left",
    "Legs": "motor_mid",
    "Rest": None,
}


@dataclass(frozen=True)
class SsvepStimulus:
    frequencies: tuple[float, ...] = (6.0, 7.5, 8.57, 10.0)
    duration_s: float = 10.0
    harmonic_weights: tuple[float, float] = (1.0, 0.5)
    snr_db: float = 0.0

    def __post_init__(self):
        if len(set(self.frequencies)) != len(self.frequencies):
            raise ValueError("stimulus frequencies must be distinct")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")


@dataclass(frozen=True)
class MiProfile:
    classes: tuple[str, ...] = MI_CLASSES
    epoch_s: float = 5.0
    band: tuple[float, float] = (8.0, 30.0)
    modulation_db: float = 6.0
    noise_floor: float = 1.0

    def __post_init__(self):
        if not self.classes:
            raise ValueError("at least one MI class required")
        unknown = [c for c in self.classes if c not in MI_CLASSES]
        if unknown:
            raise ValueError(f"unknown MI classes {unknown}")
        if self.noise_floor <= 0:
            raise ValueError("noise floor must be positive")


@dataclass(frozen=True)
class ClenchProfile:
    window_s: float = 0.5
    rest_var: float = 1.0
    clench_var: float = 100.0

    def __post_init__(self):
        if self.window_s <= 0:
            raise ValueError("window must be positive")
        if self.rest_var <= 0 or self.clench_var <= self.rest_var:
            raise ValueError("need 0 < rest_var < clench_var")


def pink_noise(n: int, rng: np.random.Generator, octaves: int = 16) -> np.ndarray:
    """1/f noise by the Voss-McCardle octave summation, unit variance."""
    total = np.zeros(n)
    for k in range(octaves):
        hold = 1 << k
        vals = rng.standard_normal(n // hold + 2)
        total += np.repeat(vals, hold)[:n]
    return total / math.sqrt(octaves)


def band_limited_noise(
    n: int, fs: float, band: tuple[float, float], rng: np.random.Generator
) -> np.ndarray:
    """Gaussian noise with spectrum restricted to [band[0], band[1]] Hz.

    Unit variance in expectation; realized variance keeps its natural
    chi-square spread.
    """
    x = rng.standard_normal(n)
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    mask = (freqs >= band[0]) & (freqs <= band[1])
    spec[~mask] = 0.0
    kept = mask.sum() / len(freqs)
    if kept == 0:
        raise ValueError(f"band {band} contains no FFT bins at n={n}, fs={fs}")
    return np.fft.irfft(spec, n) / math.sqrt(kept)


def gen_ssvep(
    stim: SsvepStimulus,
    target_index: int,
    seed: int,
    fs: float = 250.0,
    montage: Montage = DEFAULT_MONTAGE,
) -> Epoch:
    """Epoch whose visual channels carry the target stimulus frequency.

    Visual channels contain the fundamental and 2nd harmonic with a
    random phase per channel, over pink background noise scaled to the
    configured SNR. Non-visual channels carry noise only.
    """
    if not 0 <= target_index < len(stim.frequencies):
        raise IndexError(f"target_index {target_index} out of range")
    f0 = stim.frequencies[target_index]
    rng = np.random.default_rng(seed)
    n = round(stim.duration_s * fs)
    t = np.arange(1, n + 1) / fs
    visual = set(montage.subset("visual"))

    w1, w2 = stim.harmonic_weights
    sig_power = (w1**2 + w2**2) / 2.0
    noise_power = 0.0 if math.isinf(stim.snr_db) else sig_power / 10 ** (stim.snr_db / 10)

    data = np.zeros((len(montage.channels), n))
    for i, ch in enumerate(montage.channels):
        row = np.zeros(n)
        if ch in visual:
            ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
            row += w1 * np.sin(2 * np.pi * f0 * t + ph1)
            row += w2 * np.sin(4 * np.pi * f0 * t + ph2)
        if noise_power > 0:
            row = row + math.sqrt(noise_power) * pink_noise(n, rng)
        data[i] = row
    return Epoch(
        data=data, fs=fs, channel_ids=montage.channels, label=f"{f0:g}Hz"
    )


def gen_mi(
    profile: MiProfile,
    class_index: int,
    seed: int,
    fs: float = 250.0,
    montage: Montage = DEFAULT_MONTAGE,
) -> Epoch:
    """Band-limited noise epoch with the class's motor group boosted.

    The noise spectrum sits inside the profile band with a margin so the
    standard 8-30 Hz band-pass leaves it essentially untouched. Rest
    applies no boost anywhere.
    """
    if not 0 <= class_index < len(profile.classes):
        raise IndexError(f"class_index {class_index} out of range")
    cls = profile.classes[class_index]
    rng = np.random.default_rng(seed)
    n = round(profile.epoch_s * fs)
    lo, hi = profile.band
    inner = (lo + 2.5, hi - 3.5)

    group_name = MI_CLASS_GROUPS[cls]
    boosted = set(montage.subset(group_name)) if group_name else set()
    gain = 10 ** (profile.modulation_db / 10)

    data = np.zeros((len(montage.channels), n))
    for i, ch in enumerate(montage.channels):
        var = profile.noise_floor * (gain if ch in boosted else 1.0)
        data[i] = math.sqrt(var) * band_limited_noise(n, fs, inner, rng)
    return Epoch(data=data, fs=fs, channel_ids=montage.channels, label=cls)


def gen_calibration_session(
    profile: MiProfile,
    seed: int,
    fs: float = 250.0,
    montage: Montage = DEFAULT_MONTAGE,
    blocks: int = 4,
    trials_per_block: int = 5,
) -> list[Epoch]:
    """Calibration epochs: 4 blocks of 5 trials per class, shuffled within blocks."""
    ss = np.random.SeedSequence(seed)
    order_rng = np.random.default_rng(ss.spawn(1)[0])
    children = ss.spawn(blocks * trials_per_block * len(profile.classes))
    epochs = []
    i = 0
    for _ in range(blocks):
        block = [c for c in range(len(profile.classes)) for _ in range(trials_per_block)]
        order_rng.shuffle(block)
        for class_index in block:
            child_seed = int(children[i].generate_state(1)[0])
            epochs.append(gen_mi(profile, class_index, child_seed, fs, montage))
            i += 1
    return epochs


def gen_clench_window(
    profile: ClenchProfile,
    is_clench: bool,
    seed: int,
    fs: float = 250.0,
    montage: Montage = DEFAULT_MONTAGE,
) -> Epoch:
    """White-noise window at rest or clench variance across all channels."""
    rng = np.random.default_rng(seed)
    n = round(profile.window_s * fs)
    var = profile.clench_var if is_clench else profile.rest_var
    data = math.sqrt(var) * rng.standard_normal((len(montage.channels), n))
    return Epoch(
        data=data,
        fs=fs,
        channel_ids=montage.channels,
        label="Clench" if is_clench else "Rest",
    )
