"""Core signal containers, channel montages, and IIR filtering.

Everything downstream (SSVEP, MI, EMG decoding) consumes :class:`Epoch`
objects. Epochs are immutable values: operations return new epochs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

EPC1_MAGIC = b"EPC1"


class SignalError(ValueError):
    """Invalid signal container or filter configuration."""


@dataclass(frozen=True)
class Montage:
    """Named channel layout with task-relevant subsets."""

    name: str
    channels: tuple[str, ...]
    subsets: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.channels)) != len(self.channels):
            raise SignalError("montage channels must be unique")
        for sub_name, labels in self.subsets.items():
            if not labels:
                raise SignalError(f"subset {sub_name!r} is empty")
            idx = [self.channels.index(c) for c in labels if c in self.channels]
            if len(idx) != len(labels):
                missing = [c for c in labels if c not in self.channels]
                raise SignalError(f"subset {sub_name!r} has unknown labels {missing}")
            if idx != sorted(idx):
                raise SignalError(f"subset {sub_name!r} does not preserve channel order")

    def subset(self, name: str) -> tuple[str, ...]:
        if name not in self.subsets:
            raise SignalError(f"unknown subset {name!r}")
        return self.subsets[name]

    @classmethod
    def from_json(cls, path) -> "Montage":
        with open(path) as fh:
            cfg = json.load(fh)
        return cls(
            name=cfg["name"],
            channels=tuple(cfg["channels"]),
            subsets={k: tuple(v) for k, v in cfg.get("subsets", {}).items()},
        )


# Synthetic 16-channel net. Posterior channels carry SSVEP, central ones MI.
# Left/right/midline motor groups are what the MI generator modulates.
DEFAULT_CHANNELS = (
    "Fz", "F3", "F4",
    "FC3", "FC4",
    "C3", "C1", "Cz", "C2", "C4",
    "CPz", "Pz",
    "POz", "O1", "Oz", "O2",
)

DEFAULT_MONTAGE = Montage(
    name="synth16",
    channels=DEFAULT_CHANNELS,
    subsets={
        "visual": ("POz", "O1", "Oz", "O2"),
        "motor": ("FC3", "FC4", "C3", "C1", "Cz", "C2", "C4", "CPz"),
        "motor_left": ("FC3", "C3"),
        "motor_right": ("FC4", "C4"),
        "motor_mid": ("Cz", "CPz"),
    },
)


@dataclass(frozen=True)
class Epoch:
    """One channels x timesteps block of signal with its sampling rate."""

    data: np.ndarray  # C x T, float64
    fs: float
    channel_ids: tuple[str, ...]
    label: str | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise SignalError("epoch data must be a 2-D channels x samples array")
        if data.shape[0] < 1 or data.shape[1] < 2:
            raise SignalError("epoch needs at least 1 channel and 2 samples")
        if not np.all(np.isfinite(data)):
            raise SignalError("epoch contains non-finite samples")
        if self.fs <= 0:
            raise SignalError("sampling rate must be positive")
        if len(self.channel_ids) != data.shape[0]:
            raise SignalError("channel_ids length must match channel count")
        if len(set(self.channel_ids)) != len(self.channel_ids):
            raise SignalError("channel_ids must be unique")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channel_ids", tuple(self.channel_ids))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def with_data(self, data: np.ndarray) -> "Epoch":
        return Epoch(data=data, fs=self.fs, channel_ids=self.channel_ids, label=self.label)


@dataclass(frozen=True)
class FilterSpec:
    """Notch or band-pass filter configuration."""

    kind: str  # "notch" | "band-pass"
    f_notch: float | None = None
    band: tuple[float, float] | None = None
    order: int = 4
    zero_phase: bool = True
    notch_q: float = 30.0

    def __post_init__(self):
        if self.kind not in ("notch", "band-pass"):
            raise SignalError(f"unknown filter kind {self.kind!r}")
        if self.kind == "notch" and (self.f_notch is None or self.f_notch <= 0):
            raise SignalError("notch filter requires a positive f_notch")
        if self.kind == "band-pass":
            if self.band is None:
                raise SignalError("band-pass filter requires a band")
            lo, hi = self.band
            if not 0 < lo < hi:
                raise SignalError("band must satisfy 0 < f_lo < f_hi")
        if self.order < 1:
            raise SignalError("filter order must be positive")

    def validate_for(self, fs: float):
        nyq = fs / 2.0
        if self.kind == "notch" and self.f_notch >= nyq:
            raise SignalError(f"notch frequency {self.f_notch} Hz >= Nyquist {nyq} Hz")
        if self.kind == "band-pass" and self.band[1] >= nyq:
            raise SignalError(f"band edge {self.band[1]} Hz >= Nyquist {nyq} Hz")

    def sos(self, fs: float) -> np.ndarray:
        """Second-order-section coefficients for this spec at rate fs."""
        self.validate_for(fs)
        if self.kind == "band-pass":
            return sps.butter(self.order, self.band, btype="bandpass", fs=fs, output="sos")
        b, a = sps.iirnotch(self.f_notch, self.notch_q, fs=fs)
        return sps.tf2sos(b, a)

    def frequency_response(self, freqs, fs: float) -> np.ndarray:
        """|H| of the designed filter at the given frequencies.

        Zero-phase application squares the magnitude response.
        """
        _, h = sps.sosfreqz(self.sos(fs), worN=np.atleast_1d(freqs), fs=fs)
        mag = np.abs(h)
        return mag**2 if self.zero_phase else mag

    @classmethod
    def from_json(cls, path) -> "FilterSpec":
        with open(path) as fh:
            cfg = json.load(fh)
        band = cfg.get("band")
        return cls(
            kind=cfg["kind"],
            f_notch=cfg.get("f_notch"),
            band=tuple(band) if band else None,
            order=cfg.get("order", 4),
            zero_phase=cfg.get("zero_phase", True),
            notch_q=cfg.get("notch_q", 30.0),
        )


def select_channels(epoch: Epoch, subset, montage: Montage = DEFAULT_MONTAGE) -> Epoch:
    """Keep only the channels of a named montage subset (or explicit labels)."""
    labels = montage.subset(subset) if isinstance(subset, str) else tuple(subset)
    missing = [c for c in labels if c not in epoch.channel_ids]
    if missing:
        raise SignalError(f"label missing from epoch: {missing}")
    rows = [epoch.channel_ids.index(c) for c in labels]
    return Epoch(
        data=epoch.data[rows, :], fs=epoch.fs, channel_ids=labels, label=epoch.label
    )


def apply_filter(epoch: Epoch, spec: FilterSpec) -> Epoch:
    """Filter every channel of an epoch independently.

    zero_phase runs the cascade forward and backward (zero group delay,
    squared magnitude response) with reflective padding of 3*order samples.
    """
    spec.validate_for(epoch.fs)
    if epoch.n_samples < 3 * spec.order:
        raise SignalError(
            f"epoch too short: {epoch.n_samples} samples < 3*order = {3 * spec.order}"
        )
    sos = spec.sos(epoch.fs)
    out = np.empty_like(epoch.data)
    # Per-channel loop keeps filtering bit-identical under channel selection.
    for c in range(epoch.n_channels):
        if spec.zero_phase:
            out[c] = sps.sosfiltfilt(
                sos, epoch.data[c], padtype="even", padlen=min(3 * spec.order, epoch.n_samples - 1)
            )
        else:
            out[c] = sps.sosfilt(sos, epoch.data[c])
    return epoch.with_data(out)


def _write_lp_str(fh, s: str):
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _read_lp_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def write_epoch(path, epoch: Epoch):
    """Write an epoch in the EPC1 binary format (float32 samples)."""
    with open(path, "wb") as fh:
        fh.write(EPC1_MAGIC)
        fh.write(struct.pack("<II", epoch.n_channels, epoch.n_samples))
        fh.write(struct.pack("<d", epoch.fs))
        for c in epoch.channel_ids:
            _write_lp_str(fh, c)
        fh.write(epoch.data.astype("<f4").tobytes(order="C"))
        if epoch.label is not None:
            _write_lp_str(fh, epoch.label)


def read_epoch(path) -> Epoch:
    """Read an EPC1 file back into an Epoch (promoted to float64)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EPC1_MAGIC:
            raise SignalError(f"not an EPC1 file: bad magic {magic!r}")
        n_ch, n_samp = struct.unpack("<II", fh.read(8))
        (fs,) = struct.unpack("<d", fh.read(8))
        channels = tuple(_read_lp_str(fh) for _ in range(n_ch))
        data = np.frombuffer(fh.read(n_ch * n_samp * 4), dtype="<f4")
        data = data.reshape(n_ch, n_samp).astype(np.float64)
        trailer = fh.read(4)
        label = None
        if len(trailer) == 4:
            (n,) = struct.unpack("<I", trailer)
            label = fh.read(n).decode("utf-8")
    return Epoch(data=data, fs=fs, channel_ids=channels, label=label)
