"""Signal-processing primitives: STFT/iSTFT, log-mel features and interpolation.

All functions operate on torch tensors (numpy arrays are accepted and
converted) and keep leading batch dimensions, so the same code serves the
data pipeline and the differentiable model paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from s5sep.errors import InvalidInputError

_WINDOWS = ("hann",)


@dataclass(frozen=True)
class StftConfig:
    sample_rate_hz: int = 32000
    window_size: int = 2048
    hop_size: int = 160
    window: str = "hann"
    center_pad: bool = True

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise InvalidInputError("sample_rate_hz must be positive")
        if self.window_size < 2 or self.hop_size < 1:
            raise InvalidInputError("window_size must be >= 2 and hop_size >= 1")
        if self.hop_size > self.window_size:
            raise InvalidInputError(
                f"hop_size {self.hop_size} exceeds window_size {self.window_size}"
            )
        if self.window not in _WINDOWS:
            raise InvalidInputError(f"unknown window {self.window!r}; expected one of {_WINDOWS}")
        # Overlap-added squared window must stay away from zero (NOLA).
        w2 = _window_np(self.window_size) ** 2
        acc = np.zeros(self.hop_size)
        for start in range(0, self.window_size, self.hop_size):
            seg = w2[start : start + self.hop_size]
            acc[: len(seg)] += seg
        if acc.min() < 1e-6:
            raise InvalidInputError(
                f"window {self.window!r} at hop {self.hop_size} violates overlap-add reconstruction"
            )

    @property
    def n_bins(self) -> int:
        return self.window_size // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        if self.center_pad:
            return n_samples // self.hop_size + 1
        return (n_samples - self.window_size) // self.hop_size + 1


@dataclass(frozen=True)
class MelConfig:
    n_mels: int = 64
    f_min_hz: float = 0.0
    f_max_hz: Optional[float] = None  # None means Nyquist
    log_floor: float = 1e-7

    def __post_init__(self):
        if self.n_mels < 1:
            raise InvalidInputError("n_mels must be positive")
        if self.log_floor <= 0:
            raise InvalidInputError("log_floor must be positive")

    def resolved_f_max(self, sample_rate_hz: int) -> float:
        f_max = sample_rate_hz / 2 if self.f_max_hz is None else float(self.f_max_hz)
        if not (self.f_min_hz < f_max <= sample_rate_hz / 2):
            raise InvalidInputError(
                f"need f_min < f_max <= Nyquist, got {self.f_min_hz}, {f_max}, {sample_rate_hz / 2}"
            )
        return f_max


@dataclass
class ComplexSpectrogram:
    """Complex STFT values ``[..., n_bins, n_frames]`` plus the config that made them."""

    values: torch.Tensor
    config: StftConfig
    length: Optional[int] = None  # samples of the analysed signal, when known

    @property
    def n_frames(self) -> int:
        return self.values.shape[-1]


def _window_np(n: int) -> np.ndarray:
    # periodic Hann
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def _window(config: StftConfig, dtype: torch.dtype, device=None) -> torch.Tensor:
    return torch.hann_window(config.window_size, periodic=True, dtype=dtype, device=device)


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.from_numpy(np.ascontiguousarray(x))


def _real_dtype(x: torch.Tensor) -> torch.dtype:
    return x.dtype if x.dtype in (torch.float32, torch.float64) else torch.float32


def stft(waveform, config: StftConfig) -> ComplexSpectrogram:
    """Short-time Fourier transform of ``waveform[..., T]``.

    With center padding the signal is zero-padded by half a window on both
    sides, giving ``T // hop + 1`` frames. Zero padding (rather than reflection)
    keeps the transform linear for arbitrarily short inputs.
    """
    x = _as_tensor(waveform)
    if x.numel() == 0 or x.shape[-1] == 0:
        raise InvalidInputError("stft of an empty waveform")
    x = x.to(_real_dtype(x))
    if not config.center_pad and x.shape[-1] < config.window_size:
        raise InvalidInputError("waveform shorter than one window without center padding")
    lead = x.shape[:-1]
    flat = x.reshape(-1, x.shape[-1])
    spec = torch.stft(
        flat,
        n_fft=config.window_size,
        hop_length=config.hop_size,
        win_length=config.window_size,
        window=_window(config, flat.dtype, flat.device),
        center=config.center_pad,
        pad_mode="constant",
        return_complex=True,
    )
    spec = spec.reshape(*lead, spec.shape[-2], spec.shape[-1])
    return ComplexSpectrogram(spec, config, length=x.shape[-1])


def istft(spec: ComplexSpectrogram, length: Optional[int] = None) -> torch.Tensor:
    """Overlap-add inverse with squared-window normalisation."""
    cfg = spec.config
    values = spec.values
    if not torch.is_complex(values):
        raise InvalidInputError("istft expects complex values")
    if values.shape[-2] != cfg.n_bins:
        raise InvalidInputError(
            f"spectrogram has {values.shape[-2]} bins but config implies {cfg.n_bins}"
        )
    if length is None:
        length = spec.length
    if length is None:
        length = (values.shape[-1] - 1) * cfg.hop_size
    lead = values.shape[:-2]
    flat = values.reshape(-1, values.shape[-2], values.shape[-1])
    real_dtype = torch.float64 if flat.dtype == torch.complex128 else torch.float32
    out = torch.istft(
        flat,
        n_fft=cfg.window_size,
        hop_length=cfg.hop_size,
        win_length=cfg.window_size,
        window=_window(cfg, real_dtype, flat.device),
        center=cfg.center_pad,
        length=length,
    )
    return out.reshape(*lead, out.shape[-1])


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def _mel_filterbank_np(stft_config: StftConfig, mel_config: MelConfig) -> np.ndarray:
    f_max = mel_config.resolved_f_max(stft_config.sample_rate_hz)
    edges = _mel_to_hz(
        np.linspace(_hz_to_mel(mel_config.f_min_hz), _hz_to_mel(f_max), mel_config.n_mels + 2)
    )
    freqs = np.arange(stft_config.n_bins) * stft_config.sample_rate_hz / stft_config.window_size
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_filterbank(stft_config: StftConfig, mel_config: MelConfig) -> np.ndarray:
    """Triangular HTK-scale filterbank, ``[n_mels, n_bins]``, unit peak height."""
    return _mel_filterbank_np(stft_config, mel_config).copy()


def mel_spectrogram(waveform, stft_config: StftConfig, mel_config: MelConfig) -> torch.Tensor:
    """Log-mel power, ``[..., n_mels, n_frames]``.

    Natural log of filterbank-weighted power with a floor applied before the
    log. Scaling the waveform by ``a`` therefore shifts unfloored entries by
    ``2 * ln(a)`` (doubling the amplitude adds ``ln 4``).
    """
    spec = stft(waveform, stft_config).values
    power = spec.real**2 + spec.imag**2
    fb = torch.from_numpy(_mel_filterbank_np(stft_config, mel_config)).to(power.dtype)
    mel = torch.matmul(fb, power)
    return torch.log(torch.clamp(mel, min=mel_config.log_floor))


def interp_time(seq, target_len: int) -> torch.Tensor:
    """Endpoint-aligned linear interpolation along the last axis."""
    x = _as_tensor(seq)
    if target_len < 1:
        raise InvalidInputError(f"target_len must be >= 1, got {target_len}")
    if x.shape[-1] < 1:
        raise InvalidInputError("cannot interpolate an empty sequence")
    if x.shape[-1] == target_len:
        return x
    lead = x.shape[:-1]
    flat = x.reshape(1, -1, x.shape[-1])
    if not torch.is_floating_point(flat):
        flat = flat.to(torch.float32)
    if flat.shape[-1] == 1:
        out = flat.expand(-1, -1, target_len)
    else:
        out = F.interpolate(flat, size=target_len, mode="linear", align_corners=True)
    return out.reshape(*lead, target_len)


def interp_time_freq(fmap, target: Tuple[int, int]) -> torch.Tensor:
    """Bilinear, endpoint-aligned resize of the last two axes ``[..., F, T]``."""
    x = _as_tensor(fmap)
    f_out, t_out = int(target[0]), int(target[1])
    if f_out < 1 or t_out < 1:
        raise InvalidInputError(f"target shape must be positive, got {target}")
    if x.ndim < 2 or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise InvalidInputError("cannot interpolate an empty map")
    if tuple(x.shape[-2:]) == (f_out, t_out):
        return x
    lead = x.shape[:-2]
    flat = x.reshape(1, -1, x.shape[-2], x.shape[-1])
    if not torch.is_floating_point(flat):
        flat = flat.to(torch.float32)
    out = F.interpolate(flat, size=(f_out, t_out), mode="bilinear", align_corners=True)
    return out.reshape(*lead, f_out, t_out)
