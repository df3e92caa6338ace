"""Procedural spatial scenes: toy dry sources, RIRs, pink-noise beds and mixtures.

A rendered scene is ``sum_k g_k (h_k * s_k) + sum_j g_j (h_j * s_j) + n`` per
microphone, with per-event gains ``g`` chosen so that each event hits its
requested SNR against the noise bed on the reference channel. Direct-path
references convolve each target with a windowed copy of its RIR.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve

from s5sep.errors import InvalidInputError

TEMPLATES = ("tone_stack", "chirp", "am_noise_band", "click_train")
TARGET_SNR_RANGE = (5.0, 10.0)
INTERFERENCE_SNR_RANGE = (0.0, 15.0)
SPLITS = ("train", "val", "test")


@dataclass
class DrySource:
    waveform: np.ndarray
    sound_class: int
    duration_s: float
    sample_rate_hz: int
    seed: int = 0

    def __post_init__(self):
        peak = float(np.max(np.abs(self.waveform))) if self.waveform.size else 0.0
        if peak > 1.0 + 1e-9:
            raise InvalidInputError(f"dry source peak {peak:.3f} exceeds 1")


@dataclass
class Rir:
    channels: np.ndarray  # [M, H]
    sample_rate_hz: int
    seed: Optional[int] = None

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=np.float64))
        if self.channels.shape[1] < 1:
            raise InvalidInputError("RIR must have at least one tap")

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]


@dataclass(frozen=True)
class NoiseClip:
    seed: int
    gain: float = 0.03  # RMS of the rendered bed per channel


@dataclass
class SceneEvent:
    source: DrySource
    rir: Rir
    onset_s: float
    snr_db: float
    is_target: bool

    @property
    def offset_s(self) -> float:
        return self.onset_s + self.source.duration_s


@dataclass
class SceneSpec:
    events: List[SceneEvent]
    noise: NoiseClip
    length_s: float = 10.0
    n_channels: int = 4
    sample_rate_hz: int = 32000
    seed: int = 0

    def __post_init__(self):
        targets = self.targets
        n_interf = len(self.events) - len(targets)
        if len(targets) not in (1, 2, 3):
            raise InvalidInputError(f"scene needs 1-3 target events, got {len(targets)}")
        if n_interf not in (0, 1, 2):
            raise InvalidInputError(f"scene allows 0-2 interference events, got {n_interf}")
        classes = [ev.source.sound_class for ev in targets]
        if len(set(classes)) != len(classes):
            raise InvalidInputError(f"duplicate target classes {classes}")
        for ev in self.events:
            if ev.onset_s < 0 or ev.offset_s > self.length_s + 1e-9:
                raise InvalidInputError(
                    f"event class {ev.source.sound_class} [{ev.onset_s}, {ev.offset_s}] "
                    f"outside scene of {self.length_s} s"
                )
            lo, hi = TARGET_SNR_RANGE if ev.is_target else INTERFERENCE_SNR_RANGE
            if not lo <= ev.snr_db <= hi:
                kind = "target" if ev.is_target else "interference"
                raise InvalidInputError(f"{kind} SNR {ev.snr_db} dB outside [{lo}, {hi}]")
            if ev.rir.n_channels != self.n_channels:
                raise InvalidInputError("RIR channel count does not match scene")

    @property
    def targets(self) -> List[SceneEvent]:
        return [ev for ev in self.events if ev.is_target]

    @property
    def n_samples(self) -> int:
        return int(round(self.length_s * self.sample_rate_hz))


@dataclass
class SceneRendering:
    mixture: np.ndarray  # [M, T]
    direct_targets: Dict[int, np.ndarray]  # class -> reference-channel direct path
    weak_labels: frozenset
    strong_labels: List[Tuple[int, float, float]]
    spec: SceneSpec
    gains: List[float] = field(default_factory=list)
    scene_id: str = ""

    def annotation(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "weak_labels": sorted(int(c) for c in self.weak_labels),
            "strong_labels": [
                {"class": int(c), "onset_s": float(on), "offset_s": float(off)}
                for c, on, off in self.strong_labels
            ],
            "snrs": [
                {
                    "class": int(ev.source.sound_class),
                    "snr_db": float(ev.snr_db),
                    "is_target": bool(ev.is_target),
                }
                for ev in self.spec.events
            ],
            "sample_rate_hz": int(self.spec.sample_rate_hz),
        }


# --------------------------------------------------------------------------
# sources
# --------------------------------------------------------------------------


def class_base_frequency(sound_class: int, n_classes_total: int, sample_rate_hz: int) -> float:
    f_lo = 200.0
    f_hi = min(3000.0, 0.3 * sample_rate_hz)
    if n_classes_total == 1:
        return f_lo
    return float(f_lo * (f_hi / f_lo) ** ((sound_class - 1) / (n_classes_total - 1)))


def class_template(sound_class: int) -> str:
    return TEMPLATES[(sound_class - 1) % len(TEMPLATES)]


def _fade(n: int, n_fade: int) -> np.ndarray:
    env = np.ones(n)
    n_fade = min(n_fade, n // 2)
    if n_fade > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n_fade) / n_fade)
        env[:n_fade] = ramp
        env[n - n_fade :] = ramp[::-1]
    return env


def _bandpass_noise(rng, n: int, sr: int, f_center: float, rel_bw: float) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sr)
    bw = rel_bw * f_center
    spec *= np.exp(-0.5 * ((freqs - f_center) / (0.5 * bw)) ** 2)
    return np.fft.irfft(spec, n)


def synth_toy_source(
    sound_class: int,
    duration_s: float,
    seed: int,
    *,
    sample_rate_hz: int = 32000,
    n_classes_total: int = 10,
) -> DrySource:
    """Deterministic toy recording for ``sound_class``.

    Classes cycle through four templates (harmonic tone stack, repeating log
    chirp, amplitude-modulated noise band, tonal click train); the base
    frequency is spread geometrically across classes so that classes sharing
    a template sit several frequency steps apart.
    """
    if not 1 <= sound_class <= n_classes_total:
        raise InvalidInputError(f"sound_class {sound_class} not in 1..{n_classes_total}")
    if duration_s <= 0:
        raise InvalidInputError("duration_s must be positive")
    sr = sample_rate_hz
    n = int(round(duration_s * sr))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, sound_class]))
    t = np.arange(n) / sr
    f0 = class_base_frequency(sound_class, n_classes_total, sr) * (1 + rng.uniform(-0.02, 0.02))
    nyq = 0.45 * sr
    template = class_template(sound_class)

    if template == "tone_stack":
        x = np.zeros(n)
        vib = 1 + 0.004 * np.sin(2 * np.pi * rng.uniform(4, 6) * t)
        for k in range(1, 6):
            if k * f0 >= nyq:
                break
            phase = 2 * np.pi * np.cumsum(k * f0 * vib) / sr
            x += np.sin(phase + rng.uniform(0, 2 * np.pi)) / k
        x *= 0.7 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.5, 1.5) * t + rng.uniform(0, 2 * np.pi))
    elif template == "chirp":
        period = 0.4 * (1 + rng.uniform(-0.1, 0.1))
        local = np.mod(t + rng.uniform(0, period), period) / period
        f_end = min(2.0 * f0, nyq)
        inst = f0 * (f_end / f0) ** local
        x = np.sin(2 * np.pi * np.cumsum(inst) / sr)
        x *= np.sin(np.pi * local) ** 0.5
    elif template == "am_noise_band":
        x = _bandpass_noise(rng, n, sr, f0, 0.25)
        rate = 3.0 + 0.5 * sound_class
        x *= 0.55 + 0.45 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    else:  # click_train
        rate = 6.0 + 0.7 * sound_class
        x = np.zeros(n)
        burst_len = int(0.03 * sr)
        tb = np.arange(burst_len) / sr
        burst = np.sin(2 * np.pi * f0 * tb) * np.exp(-tb / 0.006)
        pos = rng.uniform(0, 1.0 / rate)
        while pos < duration_s:
            i = int(pos * sr)
            seg = burst[: n - i] * rng.uniform(0.7, 1.0)
            x[i : i + len(seg)] += seg
            pos += (1.0 / rate) * (1 + rng.uniform(-0.1, 0.1))

    x = x * _fade(n, int(0.01 * sr))
    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.9 * x / peak
    return DrySource(x, sound_class, n / sr, sr, seed=int(seed))


# --------------------------------------------------------------------------
# RIRs
# --------------------------------------------------------------------------


def synth_toy_rir(
    n_channels: int,
    seed: int,
    *,
    sample_rate_hz: int = 32000,
    tail_gain: float = 0.5,
    decay_ms: float = 20.0,
    length_ms: float = 150.0,
    max_delay_ms: float = 10.0,
    predelay_ms: float = 3.0,
) -> Rir:
    """Per channel: a unit impulse at a random delay plus an exponential noise tail.

    ``tail_gain`` is the tail amplitude relative to the direct impulse in
    energy terms (tail energy = ``tail_gain**2``). The tail starts
    ``predelay_ms`` after the direct impulse.
    """
    if n_channels < 1:
        raise InvalidInputError("n_channels must be >= 1")
    sr = sample_rate_hz
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x5249]))
    n_taps = int(round(length_ms * 1e-3 * sr))
    h = np.zeros((n_channels, n_taps))
    tau = decay_ms * 1e-3 * sr
    for m in range(n_channels):
        d = int(rng.integers(0, int(max_delay_ms * 1e-3 * sr) + 1))
        h[m, d] = 1.0
        start = d + int(round(predelay_ms * 1e-3 * sr))
        if tail_gain > 0 and start < n_taps:
            k = np.arange(n_taps - start)
            tail = rng.standard_normal(len(k)) * np.exp(-k / tau)
            tail *= tail_gain / np.sqrt(np.sum(tail**2))
            h[m, start:] += tail
    return Rir(h, sr, seed=int(seed))


def extract_direct_path_rir(
    rir: Rir,
    window_ms: float = 2.5,
    *,
    pre_ms: float = 1.0,
    taper_ms: float = 0.25,
    peak_fraction: float = 0.5,
) -> Rir:
    """Keep the neighbourhood of each channel's first significant peak.

    The peak is the first tap with ``|h| >= peak_fraction * max|h|``. Taps in
    ``[peak - pre_ms, peak + window_ms]`` pass unchanged, raised-cosine tapers
    of ``taper_ms`` extend either side, everything else is zeroed. A channel
    with no energy outside its tapered window is already a direct path and
    is returned as is, which makes the extraction idempotent.
    """
    sr = rir.sample_rate_hz
    h = rir.channels
    out = np.zeros_like(h)
    pre = int(round(pre_ms * 1e-3 * sr))
    post = int(round(window_ms * 1e-3 * sr))
    taper = int(round(taper_ms * 1e-3 * sr))
    n = h.shape[1]
    idx = np.arange(n)
    for m in range(h.shape[0]):
        mag = np.abs(h[m])
        peak_val = mag.max()
        if peak_val == 0:
            raise InvalidInputError(f"RIR channel {m} is all zeros")
        p = int(np.argmax(mag >= peak_fraction * peak_val))
        lo, hi = p - pre, p + post
        w = np.zeros(n)
        w[(idx >= lo) & (idx <= hi)] = 1.0
        if taper > 0:
            for j in range(1, taper + 1):
                v = 0.5 + 0.5 * np.cos(np.pi * j / (taper + 1))
                if 0 <= lo - j < n:
                    w[lo - j] = v
                if 0 <= hi + j < n:
                    w[hi + j] = v
        if np.any(h[m][w == 0]):
            out[m] = h[m] * w
        else:
            out[m] = h[m]
    return Rir(out, sr, seed=rir.seed)


# --------------------------------------------------------------------------
# mixing
# --------------------------------------------------------------------------


def spatialize(source: DrySource, rir: Rir, onset_s: float, n_samples: int) -> np.ndarray:
    """Convolve with every RIR channel and place at ``onset_s`` in an ``n_samples`` scene."""
    if rir.sample_rate_hz != source.sample_rate_hz:
        raise InvalidInputError("source and RIR sample rates differ")
    start = int(round(onset_s * source.sample_rate_hz))
    if onset_s < 0 or start + len(source.waveform) > n_samples:
        raise InvalidInputError(
            f"source of {len(source.waveform)} samples at onset {start} does not fit in {n_samples}"
        )
    wet = fftconvolve(rir.channels, source.waveform[None, :], axes=-1)
    out = np.zeros((rir.n_channels, n_samples))
    seg = wet[:, : n_samples - start]
    out[:, start : start + seg.shape[1]] = seg
    return out


def scale_to_snr(
    spatialized_event: np.ndarray,
    reference: np.ndarray,
    snr_db: float,
    support: Optional[slice] = None,
) -> float:
    """Gain putting the event ``snr_db`` above ``reference`` on channel 1.

    Event energy is taken over the whole channel; reference energy only over
    ``support`` (the event's active samples), defaulting to the full length.
    """
    e_evt = float(np.sum(np.asarray(spatialized_event)[0] ** 2))
    if e_evt == 0:
        raise InvalidInputError("event has zero energy on the reference channel")
    ref = np.asarray(reference)[0]
    if support is not None:
        ref = ref[support]
    e_ref = float(np.sum(ref**2))
    if e_ref == 0:
        raise InvalidInputError("reference has zero energy over the event support")
    return float(10 ** (snr_db / 20) * np.sqrt(e_ref / e_evt))


def measure_snr(scaled_event_ch1: np.ndarray, reference_ch1: np.ndarray, support: slice) -> float:
    num = float(np.sum(np.asarray(scaled_event_ch1) ** 2))
    den = float(np.sum(np.asarray(reference_ch1)[support] ** 2))
    return 10 * np.log10(num / den)


def pink_noise(n_channels: int, n_samples: int, seed: int) -> np.ndarray:
    """Independent unit-RMS pink noise per channel."""
    return _pink_noise(n_channels, n_samples, seed).copy()


@lru_cache(maxsize=64)
def _pink_noise(n_channels: int, n_samples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x4E]))
    white = np.fft.rfft(rng.standard_normal((n_channels, n_samples)), axis=-1)
    k = np.arange(white.shape[-1], dtype=np.float64)
    k[0] = np.inf
    pink = np.fft.irfft(white / np.sqrt(k), n_samples, axis=-1)
    rms = np.sqrt(np.mean(pink**2, axis=-1, keepdims=True))
    return pink / np.maximum(rms, 1e-12)


def event_support(event: SceneEvent, sample_rate_hz: int) -> slice:
    start = int(round(event.onset_s * sample_rate_hz))
    return slice(start, start + len(event.source.waveform))


def render_noise(spec: SceneSpec) -> np.ndarray:
    if spec.noise.gain == 0:
        return np.zeros((spec.n_channels, spec.n_samples))
    return spec.noise.gain * pink_noise(spec.n_channels, spec.n_samples, spec.noise.seed)


def render_scene(spec: SceneSpec, direct_window_ms: float = 2.5) -> SceneRendering:
    """Render mixture, direct-path targets and labels for ``spec``.

    When the noise bed is silent the SNR reference is undefined and events
    keep unit gain.
    """
    sr = spec.sample_rate_hz
    n = spec.n_samples
    noise = render_noise(spec)
    mixture = noise.copy()
    direct: Dict[int, np.ndarray] = {}
    strong: List[Tuple[int, float, float]] = []
    gains: List[float] = []
    for ev in spec.events:
        if ev.source.sample_rate_hz != sr:
            raise InvalidInputError("event sample rate differs from scene sample rate")
        wet = spatialize(ev.source, ev.rir, ev.onset_s, n)
        support = event_support(ev, sr)
        g = 1.0 if spec.noise.gain == 0 else scale_to_snr(wet, noise, ev.snr_db, support)
        gains.append(g)
        mixture += g * wet
        if ev.is_target:
            h_direct = extract_direct_path_rir(ev.rir, direct_window_ms)
            ref_rir = Rir(h_direct.channels[:1], sr)
            direct[ev.source.sound_class] = g * spatialize(ev.source, ref_rir, ev.onset_s, n)[0]
            strong.append((ev.source.sound_class, ev.onset_s, ev.offset_s))
    return SceneRendering(
        mixture=mixture,
        direct_targets=direct,
        weak_labels=frozenset(direct),
        strong_labels=strong,
        spec=spec,
        gains=gains,
    )


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------


def _split_id(split: str) -> int:
    if split not in SPLITS:
        raise InvalidInputError(f"unknown split {split!r}; expected one of {SPLITS}")
    return zlib.crc32(split.encode())


@dataclass(frozen=True)
class ToyCatalog:
    """Everything needed to sample scenes: class bank, RIR/noise pools, ranges."""

    sample_rate_hz: int = 8000
    scene_length_s: float = 4.0
    n_channels: int = 2
    n_target_classes: int = 6
    n_interference_classes: int = 4
    n_rirs: Tuple[int, int, int] = (16, 8, 8)  # train, val, test
    n_noises: Tuple[int, int, int] = (32, 8, 8)
    noise_gain: float = 0.03
    min_duration_s: float = 1.0
    max_duration_s: float = 3.0
    rir_tail_gain: float = 0.5
    rir_decay_ms: float = 20.0

    @property
    def n_classes_total(self) -> int:
        return self.n_target_classes + self.n_interference_classes

    @property
    def target_classes(self) -> List[int]:
        return list(range(1, self.n_target_classes + 1))

    @property
    def interference_classes(self) -> List[int]:
        return list(range(self.n_target_classes + 1, self.n_classes_total + 1))

    def rir_pool(self, split: str) -> List[Rir]:
        return list(_rir_pool(self, split))

    def source(self, sound_class: int, duration_s: float, seed: int) -> DrySource:
        return synth_toy_source(
            sound_class,
            duration_s,
            seed,
            sample_rate_hz=self.sample_rate_hz,
            n_classes_total=self.n_classes_total,
        )


@lru_cache(maxsize=16)
def _rir_pool(catalog: ToyCatalog, split: str) -> Tuple[Rir, ...]:
    count = catalog.n_rirs[SPLITS.index(split)]
    base = _split_id(split)
    return tuple(
        synth_toy_rir(
            catalog.n_channels,
            (base + 7919 * i) & 0xFFFFFFFF,
            sample_rate_hz=catalog.sample_rate_hz,
            tail_gain=catalog.rir_tail_gain,
            decay_ms=catalog.rir_decay_ms,
        )
        for i in range(count)
    )


def sample_scene_spec(rng: np.random.Generator, catalog: ToyCatalog, split: str) -> SceneSpec:
    length = catalog.scene_length_s
    rirs = _rir_pool(catalog, split)
    n_noise = catalog.n_noises[SPLITS.index(split)]
    n_targets = int(rng.integers(1, 4))
    n_interf = int(rng.integers(0, 3))
    target_classes = rng.choice(catalog.target_classes, size=n_targets, replace=False)
    interf_pool = catalog.interference_classes
    interf_classes = (
        rng.choice(interf_pool, size=min(n_interf, len(interf_pool)), replace=False)
        if interf_pool
        else []
    )
    events = []
    max_dur = min(catalog.max_duration_s, length)
    for classes, is_target in ((target_classes, True), (interf_classes, False)):
        for c in classes:
            dur = float(rng.uniform(min(catalog.min_duration_s, max_dur), max_dur))
            dur = int(dur * catalog.sample_rate_hz) / catalog.sample_rate_hz
            onset = float(rng.uniform(0.0, length - dur))
            onset = int(onset * catalog.sample_rate_hz) / catalog.sample_rate_hz
            lo, hi = TARGET_SNR_RANGE if is_target else INTERFERENCE_SNR_RANGE
            src_seed = int(rng.integers(0, 2**31))
            events.append(
                SceneEvent(
                    source=catalog.source(int(c), dur, src_seed),
                    rir=rirs[int(rng.integers(len(rirs)))],
                    onset_s=onset,
                    snr_db=float(rng.uniform(lo, hi)),
                    is_target=is_target,
                )
            )
    noise_seed = (_split_id(split) * 31 + int(rng.integers(n_noise))) & 0xFFFFFFFF
    return SceneSpec(
        events=events,
        noise=NoiseClip(noise_seed, catalog.noise_gain),
        length_s=length,
        n_channels=catalog.n_channels,
        sample_rate_hz=catalog.sample_rate_hz,
        seed=int(rng.integers(0, 2**31)),
    )


def scene_rng(split: str, index: int, base_seed: int, epoch: int = 0) -> np.random.Generator:
    key = [int(base_seed) & 0xFFFFFFFF, _split_id(split), int(index)]
    if split == "train":
        key.append(int(epoch))
    return np.random.default_rng(np.random.SeedSequence(key))


def render_dataset_scene(
    split: str, index: int, base_seed: int, catalog: ToyCatalog, epoch: int = 0
) -> SceneRendering:
    """Scene ``index`` of ``split``: a pure function of its arguments."""
    spec = sample_scene_spec(scene_rng(split, index, base_seed, epoch), catalog, split)
    rendering = render_scene(spec)
    rendering.scene_id = f"{split}_{index:05d}" if split != "train" else f"train_e{epoch}_{index:06d}"
    return rendering


def make_dataset(
    split: str,
    n_scenes: int,
    base_seed: int,
    catalog: ToyCatalog,
    *,
    epoch: int = 0,
    start: int = 0,
) -> Iterator[SceneRendering]:
    """Stream ``n_scenes`` renderings.

    Validation and test scenes depend only on ``(base_seed, index)``. Training
    scenes additionally depend on ``epoch`` so each pass draws fresh mixtures.
    """
    if n_scenes < 1:
        raise InvalidInputError("n_scenes must be >= 1")
    _split_id(split)
    for i in range(start, start + n_scenes):
        yield render_dataset_scene(split, i, base_seed, catalog, epoch)


# --------------------------------------------------------------------------
# disk format
# --------------------------------------------------------------------------


def write_wav(path: Path, audio: np.ndarray, sample_rate_hz: int) -> None:
    """Write ``[channels, T]`` or ``[T]`` audio as 32-bit float PCM."""
    data = np.asarray(audio, dtype=np.float32)
    if data.ndim == 2:
        data = data.T
    wavfile.write(str(path), int(sample_rate_hz), np.ascontiguousarray(data))


def read_wav(path: Path) -> Tuple[np.ndarray, int]:
    """Read a WAV as float64 ``[channels, T]``."""
    sr, data = wavfile.read(str(path))
    if data.dtype.kind in "iu":
        scale = float(np.iinfo(data.dtype).max)
        data = data.astype(np.float64) / scale
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return data, int(sr)


def write_scene(rendering: SceneRendering, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sid = rendering.scene_id or f"scene_{rendering.spec.seed}"
    sr = rendering.spec.sample_rate_hz
    write_wav(out_dir / f"{sid}.wav", rendering.mixture, sr)
    for c, target in rendering.direct_targets.items():
        write_wav(out_dir / f"{sid}.target{c}.wav", target, sr)
    ann = rendering.annotation()
    ann["scene_id"] = sid
    (out_dir / f"{sid}.json").write_text(json.dumps(ann, indent=2))
    return out_dir / f"{sid}.wav"


@dataclass
class LoadedScene:
    scene_id: str
    mixture: np.ndarray
    direct_targets: Dict[int, np.ndarray]
    weak_labels: frozenset
    strong_labels: List[Tuple[int, float, float]]
    sample_rate_hz: int


def load_scene(directory: Path, scene_id: str) -> LoadedScene:
    directory = Path(directory)
    ann = json.loads((directory / f"{scene_id}.json").read_text())
    mixture, sr = read_wav(directory / f"{scene_id}.wav")
    targets = {int(c): read_wav(directory / f"{scene_id}.target{c}.wav")[0][0] for c in ann["weak_labels"]}
    strong = [(int(e["class"]), float(e["onset_s"]), float(e["offset_s"])) for e in ann["strong_labels"]]
    return LoadedScene(scene_id, mixture, targets, frozenset(targets), strong, sr)


def list_scenes(directory: Path) -> Sequence[str]:
    return sorted(p.stem for p in Path(directory).glob("*.json") if p.stem != "manifest")
