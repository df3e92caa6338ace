import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from s5sep.dsp import (
    ComplexSpectrogram,
    MelConfig,
    StftConfig,
    interp_time,
    interp_time_freq,
    istft,
    mel_filterbank,
    mel_spectrogram,
    stft,
)
from s5sep.errors import InvalidInputError
from s5sep.scene import ToyCatalog, render_dataset_scene

SMALL = StftConfig(8000, 256, 64)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestStftConfig:
    def test_defaults(self):
        cfg = StftConfig()
        assert (cfg.sample_rate_hz, cfg.window_size, cfg.hop_size) == (32000, 2048, 160)
        assert cfg.n_bins == 1025

    def test_hop_larger_than_window(self):
        with pytest.raises(InvalidInputError, match="exceeds window_size"):
            StftConfig(8000, 256, 512)

    def test_hann_without_overlap_rejected(self):
        # a periodic Hann window at hop = window has a zero at every frame start
        with pytest.raises(InvalidInputError, match="overlap-add"):
            StftConfig(8000, 256, 256)

    def test_unknown_window(self):
        with pytest.raises(InvalidInputError, match="unknown window"):
            StftConfig(window="kaiser")


class TestStft:
    def test_frame_count(self):
        x = torch.randn(1000)
        spec = stft(x, SMALL)
        assert spec.values.shape == (129, 1000 // 64 + 1)

    def test_zero_input_gives_zero_spectrogram(self):
        spec = stft(torch.zeros(32000), StftConfig())
        assert torch.count_nonzero(spec.values) == 0

    def test_empty_input(self):
        with pytest.raises(InvalidInputError, match="empty"):
            stft(torch.zeros(0), SMALL)

    def test_linear(self):
        g = torch.Generator().manual_seed(0)
        a, b = torch.randn(2000, generator=g, dtype=torch.float64), torch.randn(2000, generator=g, dtype=torch.float64)
        lhs = stft(2.5 * a - b, SMALL).values
        rhs = 2.5 * stft(a, SMALL).values - stft(b, SMALL).values
        assert torch.allclose(lhs, rhs, atol=1e-10)

    def test_sine_on_bin_center_concentrates_energy(self):
        cfg = StftConfig()
        k = 40
        f = k * cfg.sample_rate_hz / cfg.window_size
        t = np.arange(cfg.sample_rate_hz) / cfg.sample_rate_hz
        x = np.sin(2 * np.pi * f * t)
        spec = stft(torch.tensor(x), cfg).values.numpy()
        half = cfg.window_size // 2 // cfg.hop_size + 1
        interior = spec[:, half:-half]
        energy = np.abs(interior) ** 2
        assert energy[k - 1 : k + 2].sum() / energy.sum() >= 0.95

        # oracle: direct DFT of one windowed interior frame
        j = interior.shape[1] // 2 + half
        start = j * cfg.hop_size - cfg.window_size // 2
        n = np.arange(cfg.window_size)
        w = 0.5 - 0.5 * np.cos(2 * np.pi * n / cfg.window_size)
        frame = x[start : start + cfg.window_size] * w
        dft = np.array([np.sum(frame * np.exp(-2j * np.pi * b * n / cfg.window_size)) for b in range(k - 2, k + 3)])
        assert np.allclose(spec[k - 2 : k + 3, j], dft, atol=1e-6)

    def test_keeps_leading_dims(self):
        x = torch.randn(3, 2, 700)
        assert stft(x, SMALL).values.shape[:2] == (3, 2)


class TestIstft:
    def test_zero_spectrogram(self):
        spec = ComplexSpectrogram(torch.zeros(129, 20, dtype=torch.complex64), SMALL)
        assert torch.count_nonzero(istft(spec)) == 0

    def test_white_noise_round_trip(self):
        x = torch.randn(16000, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        y = istft(stft(x, StftConfig()))
        assert y.shape == x.shape
        assert rel_err(y, x) < 1e-4

    def test_toy_mixture_round_trip(self):
        scene = render_dataset_scene("val", 0, 0, ToyCatalog())
        x = torch.tensor(scene.mixture)
        cfg = StftConfig(8000, 512, 256)
        assert rel_err(istft(stft(x, cfg)), x) < 1e-4

    def test_bin_mismatch(self):
        spec = ComplexSpectrogram(torch.zeros(100, 5, dtype=torch.complex64), SMALL)
        with pytest.raises(InvalidInputError, match="bins"):
            istft(spec)

    def test_length_within_one_hop(self):
        x = torch.randn(1001)
        spec = stft(x, SMALL)
        spec.length = None
        assert abs(istft(spec).shape[-1] - 1001) <= SMALL.hop_size

    @settings(max_examples=25, deadline=None)
    @given(
        window=st.sampled_from([64, 128, 256]),
        hop_div=st.sampled_from([2, 4, 8]),
        n=st.integers(50, 3000),
        seed=st.integers(0, 1000),
    )
    def test_round_trip_property(self, window, hop_div, n, seed):
        cfg = StftConfig(8000, window, window // hop_div)
        x = torch.randn(n, dtype=torch.float64, generator=torch.Generator().manual_seed(seed))
        assert rel_err(istft(stft(x, cfg)), x) < 1e-4


def brute_force_filterbank(stft_cfg: StftConfig, mel_cfg: MelConfig) -> np.ndarray:
    def hz2mel(f):
        return 2595.0 * math.log10(1.0 + f / 700.0)

    def mel2hz(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    f_max = mel_cfg.f_max_hz or stft_cfg.sample_rate_hz / 2
    lo, hi = hz2mel(mel_cfg.f_min_hz), hz2mel(f_max)
    points = [mel2hz(lo + (hi - lo) * i / (mel_cfg.n_mels + 1)) for i in range(mel_cfg.n_mels + 2)]
    fb = np.zeros((mel_cfg.n_mels, stft_cfg.n_bins))
    for m in range(mel_cfg.n_mels):
        left, center, right = points[m], points[m + 1], points[m + 2]
        for b in range(stft_cfg.n_bins):
            f = b * stft_cfg.sample_rate_hz / stft_cfg.window_size
            if left < f <= center:
                fb[m, b] = (f - left) / (center - left)
            elif center < f < right:
                fb[m, b] = (right - f) / (right - center)
    return fb


class TestMel:
    def test_zero_waveform_is_log_floor(self):
        mel_cfg = MelConfig()
        out = mel_spectrogram(torch.zeros(4000), SMALL, mel_cfg)
        assert torch.allclose(out, torch.full_like(out, math.log(mel_cfg.log_floor)))

    def test_doubling_amplitude_adds_ln4(self):
        x = torch.randn(4000, dtype=torch.float64, generator=torch.Generator().manual_seed(3))
        a = mel_spectrogram(x, SMALL, MelConfig(n_mels=32))
        b = mel_spectrogram(2 * x, SMALL, MelConfig(n_mels=32))
        floor = math.log(1e-7)
        keep = a > floor + 5
        assert torch.allclose((b - a)[keep], torch.full_like(a[keep], math.log(4.0)), atol=1e-9)

    def test_matches_brute_force_filterbank(self):
        mel_cfg = MelConfig(n_mels=24)
        fb = brute_force_filterbank(SMALL, mel_cfg)
        assert np.allclose(mel_filterbank(SMALL, mel_cfg), fb, atol=1e-9)
        x = torch.randn(3000, dtype=torch.float64, generator=torch.Generator().manual_seed(4))
        power = np.abs(stft(x, SMALL).values.numpy()) ** 2
        expected = np.log(np.maximum(fb @ power, mel_cfg.log_floor))
        assert np.allclose(mel_spectrogram(x, SMALL, mel_cfg).numpy(), expected, atol=1e-5)

    def test_finite_everywhere(self):
        out = mel_spectrogram(torch.randn(2, 3000) * 1e-9, SMALL, MelConfig())
        assert torch.isfinite(out).all()

    def test_trailing_zeros_shorter_than_hop(self):
        x = torch.randn(64 * 20, dtype=torch.float64, generator=torch.Generator().manual_seed(5))
        a = mel_spectrogram(x, SMALL, MelConfig(n_mels=16))
        b = mel_spectrogram(torch.cat([x, torch.zeros(30, dtype=x.dtype)]), SMALL, MelConfig(n_mels=16))
        assert a.shape == b.shape
        assert torch.allclose(a, b, atol=1e-9)

    def test_bad_bounds(self):
        with pytest.raises(InvalidInputError, match="f_min < f_max"):
            mel_spectrogram(torch.randn(1000), SMALL, MelConfig(f_min_hz=5000.0))


class TestInterpTime:
    def test_identity(self):
        x = torch.randn(3, 7)
        assert interp_time(x, 7) is x

    def test_constant(self):
        out = interp_time(torch.full((2, 5), 3.5), 17)
        assert torch.allclose(out, torch.full((2, 17), 3.5))

    def test_hand_example(self):
        assert torch.allclose(interp_time(torch.tensor([[0.0, 1.0]]), 3), torch.tensor([[0.0, 0.5, 1.0]]))

    def test_target_len_too_small(self):
        with pytest.raises(InvalidInputError, match="target_len"):
            interp_time(torch.ones(1, 4), 0)

    @settings(max_examples=40, deadline=None)
    @given(n_in=st.integers(2, 40), n_out=st.integers(1, 60), seed=st.integers(0, 10_000))
    def test_matches_numpy_interp(self, n_in, n_out, seed):
        x = np.random.default_rng(seed).normal(size=(2, n_in))
        grid = np.linspace(0, n_in - 1, n_out) if n_out > 1 else np.array([0.0])
        expected = np.stack([np.interp(grid, np.arange(n_in), row) for row in x])
        out = interp_time(torch.tensor(x), n_out).numpy()
        assert np.allclose(out, expected, atol=1e-9)
        # convex combinations preserve the global bounds
        assert out.min() >= x.min() - 1e-12 and out.max() <= x.max() + 1e-12

    def test_linear_map(self):
        a, b = torch.randn(2, 9, dtype=torch.float64), torch.randn(2, 9, dtype=torch.float64)
        assert torch.allclose(interp_time(3 * a + b, 20), 3 * interp_time(a, 20) + interp_time(b, 20))


class TestInterpTimeFreq:
    def test_identity(self):
        x = torch.randn(4, 5, 6)
        assert interp_time_freq(x, (5, 6)) is x

    def test_constant(self):
        out = interp_time_freq(torch.full((2, 3, 4), -1.5), (9, 2))
        assert torch.allclose(out, torch.full((2, 9, 2), -1.5))

    @settings(max_examples=30, deadline=None)
    @given(
        f_in=st.integers(1, 12), t_in=st.integers(1, 12),
        f_out=st.integers(1, 20), t_out=st.integers(1, 20), seed=st.integers(0, 10_000),
    )
    def test_equals_axis_sequential(self, f_in, t_in, f_out, t_out, seed):
        x = torch.tensor(np.random.default_rng(seed).normal(size=(3, f_in, t_in)))
        out = interp_time_freq(x, (f_out, t_out))
        seq = interp_time(x, t_out)  # along time
        seq = interp_time(seq.transpose(-1, -2), f_out).transpose(-1, -2)  # along frequency
        assert torch.allclose(out, seq, atol=1e-6)
        assert out.min() >= x.min() - 1e-9 and out.max() <= x.max() + 1e-9

    def test_bad_target(self):
        with pytest.raises(InvalidInputError, match="positive"):
            interp_time_freq(torch.ones(1, 2, 2), (0, 3))
