"""Class-conditioned mask-based separator with SED guidance and iterative refinement.

A ResUNet over the magnitude spectrograms of the ``M`` mixture channels plus
one estimate channel predicts a magnitude mask and a unit phase rotation for
the reference channel. Conditioning paths:

* clip-level FiLM from the target class one-hot,
* Time-FiLM from the Stage-2 detector's frame probabilities for that class,
* embedding injection of a softmax-weighted sum of the detector's block
  outputs into the bottleneck,
* an optional dual-path GRU over the bottleneck.

Every conditioning path ends in a zero-initialised layer so that, at
initialisation, it leaves the plain ResUNet unchanged.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from s5sep.dsp import ComplexSpectrogram, MelConfig, StftConfig, interp_time, interp_time_freq
from s5sep.dsp import istft, mel_spectrogram, stft
from s5sep.errors import InvalidInputError
from s5sep.sed import SedConfig, SedModel

NORM_EPS = 1e-5
MAG_FLOOR = 1e-3
FREQ_POS_STD = 1.0


@dataclass(frozen=True)
class SeparatorConfig:
    n_mix_channels: int = 2
    n_classes: int = 6
    widths: Tuple[int, ...] = (16, 32, 64, 128)
    conditioned_layers: Optional[Tuple[int, ...]] = None  # None: every block
    use_film: bool = True
    use_time_film: bool = True
    use_injection: bool = True
    use_dprnn: bool = True
    max_train_iterations: int = 3
    film_embed_dim: int = 32
    time_film_hidden: int = 32
    dprnn_hidden: int = 32
    norm_groups: int = 4
    stft: StftConfig = field(default_factory=lambda: StftConfig(8000, 512, 256))
    mel: MelConfig = field(default_factory=MelConfig)
    sed: SedConfig = field(default_factory=SedConfig)

    def __post_init__(self):
        if not self.widths:
            raise InvalidInputError("separator needs at least one encoder block")
        if self.max_train_iterations < 1:
            raise InvalidInputError("max_train_iterations must be >= 1")
        if self.conditioned_layers is not None:
            bad = [i for i in self.conditioned_layers if not 0 <= i < self.n_blocks]
            if bad:
                raise InvalidInputError(f"conditioned_layers {bad} outside 0..{self.n_blocks - 1}")
        if self.sed.n_classes != self.n_classes:
            raise InvalidInputError("stage-2 SED class count differs from separator")

    @property
    def n_input_channels(self) -> int:
        return self.n_mix_channels + 1

    @property
    def n_blocks(self) -> int:
        # encoder blocks, bottleneck, decoder blocks
        return 2 * len(self.widths) + 1

    @property
    def needs_sed(self) -> bool:
        return self.use_time_film or self.use_injection

    def block_widths(self) -> List[int]:
        w = list(self.widths)
        return w + [w[-1]] + w[::-1]

    def conditioned(self) -> List[int]:
        if self.conditioned_layers is None:
            return list(range(self.n_blocks))
        return sorted(set(self.conditioned_layers))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        if self.conditioned_layers is not None:
            d["conditioned_layers"] = list(self.conditioned_layers)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SeparatorConfig":
        d = dict(d)
        d["widths"] = tuple(d["widths"])
        if d.get("conditioned_layers") is not None:
            d["conditioned_layers"] = tuple(d["conditioned_layers"])
        d["stft"] = StftConfig(**d["stft"])
        d["mel"] = MelConfig(**d["mel"])
        d["sed"] = SedConfig(**d["sed"])
        return cls(**d)


@dataclass
class ConditioningBundle:
    class_onehot: torch.Tensor  # [B, C]
    activity_seq: Optional[torch.Tensor] = None  # [B, S]
    hidden_states: Optional[List[torch.Tensor]] = None  # N x [B, D, 1, S]

    def detached(self) -> "ConditioningBundle":
        return ConditioningBundle(
            self.class_onehot.detach(),
            None if self.activity_seq is None else self.activity_seq.detach(),
            None if self.hidden_states is None else [h.detach() for h in self.hidden_states],
        )


@dataclass
class MaskPair:
    mag_mask: torch.Tensor
    phase_real: torch.Tensor
    phase_imag: torch.Tensor


# --------------------------------------------------------------------------
# functional pieces
# --------------------------------------------------------------------------


def check_onehot(class_onehot: torch.Tensor) -> None:
    x = class_onehot.reshape(-1, class_onehot.shape[-1])
    ok = ((x == 0) | (x == 1)).all() and (x.sum(-1) == 1).all()
    if not bool(ok):
        raise InvalidInputError("class conditioning must be exactly one-hot")


def onehot(classes: Sequence[int], n_classes: int) -> torch.Tensor:
    """One-hot rows for 1-based ``classes``."""
    out = torch.zeros(len(classes), n_classes)
    for i, c in enumerate(classes):
        if not 1 <= c <= n_classes:
            raise InvalidInputError(f"class {c} outside 1..{n_classes}")
        out[i, c - 1] = 1.0
    return out


def normalize_phase(raw_real: torch.Tensor, raw_imag: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Project raw rotation components onto the unit circle (identity if degenerate)."""
    norm = torch.sqrt(raw_real**2 + raw_imag**2)
    ok = norm > 1e-8
    safe = torch.where(ok, norm, torch.ones_like(norm))
    return (
        torch.where(ok, raw_real / safe, torch.ones_like(raw_real)),
        torch.where(ok, raw_imag / safe, torch.zeros_like(raw_imag)),
    )


def apply_mask(spec_ch1: torch.Tensor, mask: MaskPair) -> torch.Tensor:
    """Scale the magnitude by ``mag_mask`` and rotate the phase by the mask angle."""
    xr, xi = spec_ch1.real, spec_ch1.imag
    m, pr, pi = mask.mag_mask, mask.phase_real, mask.phase_imag
    return torch.complex(m * (xr * pr - xi * pi), m * (xi * pr + xr * pi))


def standardize(x: torch.Tensor) -> torch.Tensor:
    """Zero mean, unit variance per channel over the last two axes."""
    mean = x.mean(dim=(-2, -1), keepdim=True)
    var = x.var(dim=(-2, -1), keepdim=True, unbiased=False)
    return (x - mean) / torch.sqrt(var + NORM_EPS)


def _align_time(seq: torch.Tensor, valid: int, total: int) -> torch.Tensor:
    # interpolate onto the unpadded frames, then repeat the last frame over padding
    out = interp_time(seq, valid)
    if total > valid:
        out = torch.cat([out, out[..., -1:].expand(*out.shape[:-1], total - valid)], dim=-1)
    return out


def apply_film(featmap: torch.Tensor, scale: torch.Tensor, shift: torch.Tensor) -> torch.Tensor:
    """Clip-level FiLM: ``scale[..., C]``, ``shift[..., C]`` over ``featmap[..., C, F, T]``."""
    if scale.shape[-1] != featmap.shape[-3]:
        raise InvalidInputError("FiLM channel count does not match feature map")
    return scale[..., :, None, None] * featmap + shift[..., :, None, None]


def apply_time_film(
    featmap: torch.Tensor,
    scale_seq: torch.Tensor,
    shift_seq: torch.Tensor,
    valid_frames: Optional[int] = None,
) -> torch.Tensor:
    """``out[c, f, t] = scale[c, t] * in[c, f, t] + shift[c, t]``.

    Sequences of a different length are first aligned onto the feature map's
    ``valid_frames`` (default: all frames) by endpoint-aligned interpolation.
    """
    n_ch, n_t = featmap.shape[-3], featmap.shape[-1]
    if scale_seq.shape[-2] != n_ch or shift_seq.shape[-2] != n_ch:
        raise InvalidInputError(
            f"Time-FiLM has {scale_seq.shape[-2]} channels, feature map has {n_ch}"
        )
    valid = n_t if valid_frames is None else valid_frames
    if scale_seq.shape[-1] != n_t:
        scale_seq = _align_time(scale_seq, valid, n_t)
        shift_seq = _align_time(shift_seq, valid, n_t)
    return scale_seq[..., :, None, :] * featmap + shift_seq[..., :, None, :]


# --------------------------------------------------------------------------
# conditioning modules
# --------------------------------------------------------------------------


class FilmHead(nn.Module):
    """Class embedding followed by a zero-initialised linear map to ``(scale, shift)`` pairs."""

    def __init__(self, n_classes: int, embed_dim: int, widths: Sequence[int]):
        super().__init__()
        self.widths = list(widths)
        self.embed = nn.Linear(n_classes, embed_dim, bias=False)
        self.out = nn.Linear(embed_dim, 2 * sum(self.widths))
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, class_onehot: torch.Tensor) -> List[Tuple[torch.Tensor, torch.Tensor]]:
        check_onehot(class_onehot)
        raw = self.out(F.silu(self.embed(class_onehot.to(self.embed.weight.dtype))))
        return _split_pairs(raw, self.widths, dim=-1)


class TimeFilmNet(nn.Module):
    """Frame-wise feedforward network from activity probabilities to modulation sequences."""

    def __init__(self, hidden: int, widths: Sequence[int]):
        super().__init__()
        self.widths = list(widths)
        self.ffn = nn.Sequential(
            nn.Linear(1, hidden), nn.SiLU(), nn.Linear(hidden, hidden), nn.SiLU()
        )
        self.out = nn.Linear(hidden, 2 * sum(self.widths))
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, activity_seq: torch.Tensor) -> List[Tuple[torch.Tensor, torch.Tensor]]:
        """``activity_seq[B, S]`` -> per layer ``(scale[B, C, S], shift[B, C, S])``."""
        if activity_seq.shape[-1] < 1:
            raise InvalidInputError("Time-FiLM needs a non-empty activity sequence")
        raw = self.out(self.ffn(activity_seq.unsqueeze(-1)))  # [B, S, 2*sum]
        return _split_pairs(raw.transpose(-1, -2), self.widths, dim=-2)


def _split_pairs(raw: torch.Tensor, widths: Sequence[int], dim: int):
    pairs = []
    offset = 0
    for w in widths:
        scale = 1.0 + raw.narrow(dim, offset, w)
        shift = raw.narrow(dim, offset + w, w)
        pairs.append((scale, shift))
        offset += 2 * w
    return pairs


class InjectionWeights(nn.Module):
    def __init__(self, n_hidden: int, hidden_dim: int, latent_channels: int):
        super().__init__()
        self.logits = nn.Parameter(torch.zeros(n_hidden))
        self.projection = nn.Conv2d(hidden_dim, latent_channels, kernel_size=1)
        # affine on the normalised injected term; zero => no-op at init
        self.gain = nn.Parameter(torch.zeros(latent_channels))
        self.bias = nn.Parameter(torch.zeros(latent_channels))

    def alphas(self) -> torch.Tensor:
        return torch.softmax(self.logits, dim=0)


def fuse_hidden(hidden_states: Sequence[torch.Tensor], logits: torch.Tensor) -> torch.Tensor:
    """Softmax(logits)-weighted sum of the detector's block outputs."""
    if len(hidden_states) == 0:
        raise InvalidInputError("embedding injection needs at least one hidden state")
    if len(hidden_states) != logits.shape[0]:
        raise InvalidInputError(
            f"{len(hidden_states)} hidden states but {logits.shape[0]} injection weights"
        )
    alphas = torch.softmax(logits, dim=0)
    return sum(a * h for a, h in zip(alphas, hidden_states))


def inject_embeddings(
    hidden_states: Sequence[torch.Tensor],
    weights: InjectionWeights,
    latent: torch.Tensor,
    valid_frames: Optional[int] = None,
) -> torch.Tensor:
    """Add the fused, projected, resized detector features to the ResUNet latent.

    Both the latent and the injected term are standardised per channel; the
    injected term then passes through a learnable per-channel affine.
    """
    fused = fuse_hidden(hidden_states, weights.logits)
    z = weights.projection(fused)
    n_f, n_t = latent.shape[-2], latent.shape[-1]
    valid = n_t if valid_frames is None else valid_frames
    z = interp_time_freq(z, (n_f, valid))
    if n_t > valid:
        z = torch.cat([z, z[..., -1:].expand(*z.shape[:-1], n_t - valid)], dim=-1)
    z = standardize(z)
    z = weights.gain[:, None, None] * z + weights.bias[:, None, None]
    return standardize(latent) + z


class DualPathBlock(nn.Module):
    """Bidirectional GRU along time, then along frequency, each as a residual branch."""

    def __init__(self, channels: int, hidden: int):
        super().__init__()
        self.time_rnn = nn.GRU(channels, hidden, batch_first=True, bidirectional=True)
        self.time_norm = nn.LayerNorm(2 * hidden)
        self.time_proj = nn.Linear(2 * hidden, channels)
        self.freq_rnn = nn.GRU(channels, hidden, batch_first=True, bidirectional=True)
        self.freq_norm = nn.LayerNorm(2 * hidden)
        self.freq_proj = nn.Linear(2 * hidden, channels)
        for proj in (self.time_proj, self.freq_proj):
            nn.init.zeros_(proj.weight)
            nn.init.zeros_(proj.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, nf, nt = x.shape
        seq = x.permute(0, 2, 3, 1).reshape(b * nf, nt, c)
        out = self.time_proj(self.time_norm(self.time_rnn(seq)[0]))
        x = x + out.reshape(b, nf, nt, c).permute(0, 3, 1, 2)
        seq = x.permute(0, 3, 2, 1).reshape(b * nt, nf, c)
        out = self.freq_proj(self.freq_norm(self.freq_rnn(seq)[0]))
        return x + out.reshape(b, nt, nf, c).permute(0, 3, 2, 1)


class DPRNN(nn.Module):
    def __init__(self, channels: int, hidden: int, n_blocks: int = 2):
        super().__init__()
        self.blocks = nn.ModuleList(DualPathBlock(channels, hidden) for _ in range(n_blocks))

    def forward(self, x):
        for block in self.blocks:
            x = block(x)
        return x


# --------------------------------------------------------------------------
# ResUNet
# --------------------------------------------------------------------------


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, groups: int):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm1 = nn.GroupNorm(min(groups, cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.norm2 = nn.GroupNorm(min(groups, cout), cout)
        self.shortcut = nn.Identity() if cin == cout else nn.Conv2d(cin, cout, 1)

    def forward(self, x, modulate=None):
        h = self.norm1(self.conv1(x))
        if modulate is not None:
            h = modulate(h)
        h = self.norm2(self.conv2(F.silu(h)))
        return F.silu(h + self.shortcut(x))


class Separator(nn.Module):
    def __init__(self, config: SeparatorConfig):
        super().__init__()
        self.config = config
        widths = list(config.widths)
        block_w = config.block_widths()
        g = config.norm_groups
        self.input_conv = nn.Conv2d(config.n_input_channels, widths[0], 3, padding=1)
        # convolutions are blind to absolute frequency; a learned per-bin offset restores it
        mult = 2 ** len(widths)
        padded_bins = -(-config.stft.n_bins // mult) * mult
        self.freq_pos = nn.Parameter(torch.randn(widths[0], padded_bins, 1) * FREQ_POS_STD)
        self.encoder = nn.ModuleList(
            ResBlock(widths[max(i - 1, 0)], w, g) for i, w in enumerate(widths)
        )
        self.bottleneck = ResBlock(widths[-1], widths[-1], g)
        rev = widths[::-1]
        self.upsample = nn.ModuleList(
            nn.ConvTranspose2d(rev[max(k - 1, 0)], w, 2, stride=2) for k, w in enumerate(rev)
        )
        self.decoder = nn.ModuleList(ResBlock(2 * w, w, g) for w in rev)
        self.output_conv = nn.Conv2d(widths[0], 3, 1)

        cond_layers = config.conditioned()
        self._cond_index = {layer: i for i, layer in enumerate(cond_layers)}
        cond_widths = [block_w[layer] for layer in cond_layers]
        self.film = (
            FilmHead(config.n_classes, config.film_embed_dim, cond_widths) if config.use_film else None
        )
        self.time_film = TimeFilmNet(config.time_film_hidden, cond_widths) if config.use_time_film else None
        self.sed = SedModel(config.sed) if config.needs_sed else None
        self.injection = (
            InjectionWeights(config.sed.n_blocks, config.sed.embed_dim, widths[-1])
            if config.use_injection
            else None
        )
        self.dprnn = DPRNN(widths[-1], config.dprnn_hidden) if config.use_dprnn else None

    # -- parameter bookkeeping -------------------------------------------------

    def parameter_groups(self) -> Dict[str, List[nn.Parameter]]:
        groups: Dict[str, List[nn.Parameter]] = {"pretrained": [], "dprnn": [], "new": [], "stage2_sed": []}
        for name, p in self.named_parameters():
            head = name.split(".")[0]
            if head == "dprnn":
                groups["dprnn"].append(p)
            elif head in ("film", "time_film", "injection"):
                groups["new"].append(p)
            elif head == "sed":
                groups["stage2_sed"].append(p)
            else:
                groups["pretrained"].append(p)
        return groups

    def load_sed_weights(self, state_dict: Dict[str, torch.Tensor]) -> None:
        if self.sed is None:
            return
        self.sed.load_state_dict(state_dict)

    # -- conditioning ------------------------------------------------------------

    def condition(self, mixture: torch.Tensor, class_onehot: torch.Tensor) -> ConditioningBundle:
        """Run the Stage-2 detector on mixture channel 1 and select the target class."""
        check_onehot(class_onehot)
        if self.sed is None:
            return ConditioningBundle(class_onehot)
        cfg = self.config
        mel = mel_spectrogram(mixture[:, 0], cfg.stft, cfg.mel)
        out = self.sed(mel)
        activity = (out.strong * class_onehot[:, None, :].to(out.strong.dtype)).sum(-1)
        return ConditioningBundle(
            class_onehot,
            activity if cfg.use_time_film else None,
            out.embeddings.per_block_hidden if cfg.use_injection else None,
        )

    def film_params(self, class_onehot: torch.Tensor):
        if self.film is None:
            return None
        return self.film(class_onehot)

    def time_film_params(self, activity_seq: torch.Tensor):
        if self.time_film is None:
            return None
        return self.time_film(activity_seq)

    # -- forward -------------------------------------------------------------------

    def predict_mask(self, magnitudes: torch.Tensor, cond: ConditioningBundle) -> MaskPair:
        """``magnitudes[B, M+1, F, N]`` -> MaskPair over ``[B, F, N]``."""
        cfg = self.config
        b, cin, n_f, n_t = magnitudes.shape
        if cin != cfg.n_input_channels:
            raise InvalidInputError(f"expected {cfg.n_input_channels} input channels, got {cin}")
        levels = len(cfg.widths)
        mult = 2**levels
        pad_f, pad_t = (-n_f) % mult, (-n_t) % mult
        # log compression keeps the wide magnitude range in a convolution-friendly span
        x = F.pad(torch.log(magnitudes + MAG_FLOOR), (0, pad_t, 0, pad_f))

        film = self.film_params(cond.class_onehot)
        tfilm = None
        if self.time_film is not None:
            if cond.activity_seq is None:
                raise InvalidInputError("Time-FiLM enabled but no activity sequence supplied")
            tfilm = self.time_film_params(cond.activity_seq)

        def modulator(layer: int, level: int):
            idx = self._cond_index.get(layer)
            if idx is None or (film is None and tfilm is None):
                return None
            valid = -(-n_t // 2**level)

            def modulate(h):
                if film is not None:
                    h = apply_film(h, *film[idx])
                if tfilm is not None:
                    h = apply_time_film(h, *tfilm[idx], valid_frames=valid)
                return h

            return modulate

        h = self.input_conv(x) + self.freq_pos
        skips = []
        for i, block in enumerate(self.encoder):
            h = block(h, modulator(i, i))
            skips.append(h)
            h = F.avg_pool2d(h, 2)
        h = self.bottleneck(h, modulator(levels, levels))
        # the ResUNet latent is always standardised; injection adds onto it
        valid_latent = -(-n_t // mult)
        if self.injection is not None:
            if cond.hidden_states is None:
                raise InvalidInputError("injection enabled but no hidden states supplied")
            h = inject_embeddings(cond.hidden_states, self.injection, h, valid_latent)
        else:
            h = standardize(h)
        if self.dprnn is not None:
            h = self.dprnn(h)
        for k, (up, block) in enumerate(zip(self.upsample, self.decoder)):
            level = levels - 1 - k
            h = up(h)
            h = block(torch.cat([h, skips[level]], dim=1), modulator(levels + 1 + k, level))
        out = self.output_conv(h)[:, :, :n_f, :n_t]
        mag = torch.sigmoid(out[:, 0])
        pr, pi = normalize_phase(1.0 + out[:, 1], out[:, 2])
        return MaskPair(mag, pr, pi)

    def separate_step(self, stacked_input: torch.Tensor, cond: ConditioningBundle):
        """One pass: ``stacked_input[B, M+1, T]`` -> ``(estimate[B, T], MaskPair)``."""
        cfg = self.config
        if stacked_input.ndim != 3 or stacked_input.shape[1] != cfg.n_input_channels:
            raise InvalidInputError(
                f"expected input [B, {cfg.n_input_channels}, T], got {tuple(stacked_input.shape)}"
            )
        n = stacked_input.shape[-1]
        spec = stft(stacked_input, cfg.stft).values
        mask = self.predict_mask(spec.abs(), cond)
        est_spec = apply_mask(spec[:, 0], mask)
        estimate = istft(ComplexSpectrogram(est_spec, cfg.stft), length=n)
        return estimate, mask


def stack_estimate(mixture: torch.Tensor, estimate: torch.Tensor) -> torch.Tensor:
    return torch.cat([mixture, estimate.unsqueeze(1).to(mixture.dtype)], dim=1)


def iterative_separate(
    model: Separator,
    mixture: torch.Tensor,
    cond: ConditioningBundle,
    n_iters: int,
    return_all: bool = False,
):
    """Feed each estimate back as an extra input channel, starting from zeros."""
    if n_iters < 1:
        raise InvalidInputError(f"n_iters must be >= 1, got {n_iters}")
    est = torch.zeros(mixture.shape[0], mixture.shape[-1], dtype=mixture.dtype)
    history = []
    for _ in range(n_iters):
        est, _ = model.separate_step(stack_estimate(mixture, est), cond)
        history.append(est)
    return history if return_all else est


def separation_loss(estimate: torch.Tensor, target: torch.Tensor, stft_config: StftConfig) -> torch.Tensor:
    """Mean absolute waveform error plus mean absolute magnitude-spectrogram error."""
    if estimate.shape != target.shape:
        raise InvalidInputError(f"estimate {tuple(estimate.shape)} vs target {tuple(target.shape)}")
    wav = (estimate - target).abs().mean()
    mag_est = stft(estimate, stft_config).values.abs()
    mag_tgt = stft(target, stft_config).values.abs()
    return wav + (mag_est - mag_tgt).abs().mean()


@dataclass
class RefinementStep:
    loss: torch.Tensor
    n_iters: int
    previous_estimate: torch.Tensor
    estimate: torch.Tensor


def refinement_training_step(
    model: Separator,
    mixture: torch.Tensor,
    class_onehot: torch.Tensor,
    target: torch.Tensor,
    max_iters: int,
    rng: np.random.Generator,
) -> RefinementStep:
    """Sample ``k`` in ``1..max_iters``, run ``k - 1`` passes without gradients, score the last.

    The caller runs ``backward`` on ``.loss``. Only the final pass, and the
    conditioning it consumes, carry an autograd graph.
    """
    if max_iters < 1:
        raise InvalidInputError("max_iters must be >= 1")
    k = int(rng.integers(1, max_iters + 1))
    cond = model.condition(mixture, class_onehot)
    est = torch.zeros(mixture.shape[0], mixture.shape[-1], dtype=mixture.dtype)
    if k > 1:
        frozen = cond.detached()
        with torch.no_grad():
            for _ in range(k - 1):
                est, _ = model.separate_step(stack_estimate(mixture, est), frozen)
    est_final, _ = model.separate_step(stack_estimate(mixture, est), cond)
    loss = separation_loss(est_final, target, model.config.stft)
    return RefinementStep(loss, k, est, est_final)
