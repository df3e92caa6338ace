import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sed_gradient_errors
from s5sep.errors import InvalidInputError
from s5sep.sed import (
    BCE_EPS,
    SedConfig,
    SedLabels,
    SedModel,
    attention_pool,
    detect_active_classes,
    frame_targets,
    sed_loss,
    strong_head,
)

TINY = SedConfig(n_mels=8, n_blocks=2, embed_dim=8, n_heads=2, time_subsample=4, n_classes=2, max_frames=32)


def random_labels(shape_s, n_classes, gen):
    strong = (torch.rand(shape_s, n_classes, generator=gen) > 0.5).double()
    return SedLabels(strong, strong.amax(dim=-2))


class TestConfig:
    def test_heads_must_divide(self):
        with pytest.raises(InvalidInputError, match="divisible"):
            SedConfig(embed_dim=10, n_heads=4)

    @pytest.mark.parametrize("t, s", [(4, 1), (5, 2), (126, 32), (400, 100)])
    def test_output_frames(self, t, s):
        assert SedConfig().output_frames(t) == s == math.ceil(t / 4)


class TestEncode:
    def test_shapes(self):
        torch.manual_seed(0)
        model = SedModel(SedConfig(max_frames=200)).eval()
        emb = model.encode(torch.randn(2, 64, 126))
        assert emb.values.shape == (2, 32, 96)
        assert len(emb.per_block_hidden) == 4
        assert all(h.shape == (2, 96, 1, 32) for h in emb.per_block_hidden)

    def test_unbatched(self):
        model = SedModel(TINY).eval()
        assert model.encode(torch.randn(8, 9)).values.shape == (3, 8)

    def test_too_short(self):
        with pytest.raises(InvalidInputError, match="at least 4 frames"):
            SedModel(TINY).encode(torch.randn(1, 8, 3))

    def test_wrong_mel_bins(self):
        with pytest.raises(InvalidInputError, match="mel bins"):
            SedModel(TINY).encode(torch.randn(1, 9, 8))

    def test_too_long(self):
        with pytest.raises(InvalidInputError, match="max_frames"):
            SedModel(TINY).encode(torch.randn(1, 8, 33))

    def test_frequency_sensitive(self):
        torch.manual_seed(1)
        model = SedModel(TINY).eval()
        mel = torch.randn(1, 8, 16)
        perm = mel[:, torch.randperm(8, generator=torch.Generator().manual_seed(2))]
        assert not torch.allclose(model.encode(mel).values, model.encode(perm).values)

    def test_deterministic(self):
        model = SedModel(TINY).eval()
        mel = torch.randn(2, 8, 16)
        assert torch.equal(model(mel).weak, model(mel).weak)

    def test_hidden_state_count_matches_blocks(self):
        cfg = SedConfig(n_mels=8, n_blocks=3, embed_dim=8, n_heads=2, n_classes=2, max_frames=32)
        assert len(SedModel(cfg).encode(torch.randn(1, 8, 8)).per_block_hidden) == 3


class TestStrongHead:
    def test_zero_params(self):
        emb = torch.randn(5, 8)
        out = strong_head(emb, torch.zeros(3, 8), torch.zeros(3))
        assert torch.equal(out, torch.full((5, 3), 0.5))

    def test_large_bias_saturates(self):
        out = strong_head(torch.randn(5, 8), torch.zeros(3, 8), torch.full((3,), 40.0))
        assert torch.all(out > 1 - 1e-6)

    def test_hand_computed(self):
        emb = torch.tensor([[1.0, -2.0], [0.5, 0.0]], dtype=torch.float64)
        w = torch.tensor([[0.3, 0.1], [-1.0, 2.0]], dtype=torch.float64)
        b = torch.tensor([0.2, -0.5], dtype=torch.float64)
        expected = np.array(
            [[1 / (1 + math.exp(-(0.3 - 0.2 + 0.2))), 1 / (1 + math.exp(-(-1.0 - 4.0 - 0.5)))],
             [1 / (1 + math.exp(-(0.15 + 0.2))), 1 / (1 + math.exp(-(-0.5 - 0.5)))]]
        )
        assert np.allclose(strong_head(emb, w, b).numpy(), expected, atol=1e-6)


class TestAttentionPool:
    def test_single_frame_passthrough(self):
        g = torch.Generator().manual_seed(0)
        emb, strong = torch.randn(1, 8, generator=g), torch.rand(1, 3, generator=g)
        weak, alphas = attention_pool(emb, strong, torch.randn(3, 8, generator=g), torch.randn(3, generator=g))
        assert torch.allclose(weak, strong[0], atol=1e-6)
        assert torch.allclose(alphas, torch.ones(1, 3))

    def test_uniform_attention_is_mean(self):
        emb, strong = torch.randn(7, 8), torch.rand(7, 3)
        weak, alphas = attention_pool(emb, strong, torch.zeros(3, 8), torch.zeros(3))
        assert torch.allclose(alphas, torch.full((7, 3), 1 / 7))
        assert torch.allclose(weak, strong.mean(0), atol=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(s=st.integers(1, 20), c=st.integers(1, 5), seed=st.integers(0, 10_000))
    def test_convex_combination(self, s, c, seed):
        g = torch.Generator().manual_seed(seed)
        emb = torch.randn(2, s, 6, generator=g, dtype=torch.float64)
        strong = torch.rand(2, s, c, generator=g, dtype=torch.float64)
        w = 3 * torch.randn(c, 6, generator=g, dtype=torch.float64)
        weak, alphas = attention_pool(emb, strong, w, torch.randn(c, generator=g, dtype=torch.float64))
        assert torch.allclose(alphas.sum(-2), torch.ones(2, c, dtype=torch.float64), atol=1e-12)
        assert torch.all(weak >= strong.amin(-2) - 1e-12) and torch.all(weak <= strong.amax(-2) + 1e-12)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError, match="embedding length"):
            attention_pool(torch.randn(4, 8), torch.rand(5, 2), torch.zeros(2, 8), torch.zeros(2))


class TestSedLoss:
    def test_uniform_half_is_ln2(self):
        gen = torch.Generator().manual_seed(0)
        for lam in (0.0, 0.3, 0.5, 1.0):
            labels = random_labels(6, 4, gen)
            loss = sed_loss(torch.full((6, 4), 0.5, dtype=torch.float64),
                            torch.full((4,), 0.5, dtype=torch.float64), labels, lam)
            assert abs(loss.item() - math.log(2)) < 1e-6

    def test_perfect_predictions_near_zero(self):
        labels = random_labels(6, 4, torch.Generator().manual_seed(1))
        loss = sed_loss(labels.strong.clone(), labels.weak.clone(), labels, 0.5)
        assert 0 <= loss.item() <= -2 * math.log(1 - BCE_EPS) + 1e-12

    def test_lambda_endpoints(self):
        gen = torch.Generator().manual_seed(2)
        labels = random_labels(5, 3, gen)
        strong = torch.rand(5, 3, generator=gen, dtype=torch.float64)
        weak = torch.rand(3, generator=gen, dtype=torch.float64)
        bce = lambda p, y: -(y * torch.log(p) + (1 - y) * torch.log(1 - p)).mean()
        assert abs(sed_loss(strong, weak, labels, 1.0).item() - bce(strong, labels.strong).item()) < 1e-9
        assert abs(sed_loss(strong, weak, labels, 0.0).item() - bce(weak, labels.weak).item()) < 1e-9

    def test_finite_at_extremes(self):
        labels = SedLabels(torch.ones(3, 2), torch.ones(2))
        assert torch.isfinite(sed_loss(torch.zeros(3, 2), torch.zeros(2), labels))

    def test_class_permutation_invariant(self):
        gen = torch.Generator().manual_seed(3)
        labels = random_labels(5, 4, gen)
        strong = torch.rand(2, 5, 4, generator=gen, dtype=torch.float64)
        weak = torch.rand(2, 4, generator=gen, dtype=torch.float64)
        labels = SedLabels(labels.strong.expand(2, -1, -1), labels.weak.expand(2, -1))
        perm = torch.tensor([2, 0, 3, 1])
        permuted = SedLabels(labels.strong[..., perm], labels.weak[..., perm])
        a = sed_loss(strong, weak, labels)
        b = sed_loss(strong[..., perm], weak[..., perm], permuted)
        assert abs(a.item() - b.item()) < 1e-9

    def test_shape_mismatch(self):
        labels = SedLabels(torch.zeros(3, 2), torch.zeros(2))
        with pytest.raises(InvalidInputError, match="do not match"):
            sed_loss(torch.zeros(4, 2), torch.zeros(2), labels)

    def test_bad_lambda(self):
        labels = SedLabels(torch.zeros(3, 2), torch.zeros(2))
        with pytest.raises(InvalidInputError, match="lambda"):
            sed_loss(torch.zeros(3, 2), torch.zeros(2), labels, 1.5)

    def test_gradcheck_all_parameters(self):
        errors = sed_gradient_errors()
        assert len(errors) == len(list(SedModel(TINY).parameters()))
        bad = {k: v for k, v in errors.items() if not v < 1e-3}
        assert not bad, bad


class TestFrameTargets:
    def test_whole_clip(self):
        labels = frame_targets([(2, 0.0, 4.0)], 32, 4.0, 3)
        assert torch.all(labels.strong[:, 1] == 1) and labels.strong[:, [0, 2]].sum() == 0
        assert labels.weak.tolist() == [0.0, 1.0, 0.0]

    def test_empty(self):
        labels = frame_targets([], 10, 4.0, 3)
        assert labels.strong.sum() == 0 and labels.weak.sum() == 0

    def test_one_second_in_ten(self):
        for onset in (0.0, 2.37, 5.5, 8.99):
            active = frame_targets([(1, onset, onset + 1.0)], 500, 10.0, 1).strong.sum().item()
            assert abs(active - 50) <= 1

    def test_reversed_event(self):
        with pytest.raises(InvalidInputError, match="precedes"):
            frame_targets([(1, 2.0, 1.0)], 10, 4.0, 1)

    @settings(max_examples=50, deadline=None)
    @given(
        events=st.lists(
            st.tuples(st.integers(1, 3), st.floats(0, 3.9), st.floats(0.01, 2.0)), max_size=4
        ),
        s=st.integers(1, 64),
    )
    def test_weak_is_any_strong(self, events, s):
        ann = [(c, on, min(4.0, on + d)) for c, on, d in events]
        labels = frame_targets(ann, s, 4.0, 3)
        assert torch.equal(labels.weak, labels.strong.amax(0))
        # frame-overlap oracle
        width = 4.0 / s
        for c in range(1, 4):
            for k in range(s):
                lo, hi = k * width, (k + 1) * width
                hit = any(cc == c and on < hi and off > lo for cc, on, off in ann)
                assert labels.strong[k, c - 1].item() == float(hit)


class TestDetect:
    def test_all_zero(self):
        assert detect_active_classes(torch.zeros(4)) == set()

    def test_definition(self):
        assert detect_active_classes(torch.tensor([0.9, 0.4, 0.6]), 0.5) == {1, 3}

    @settings(max_examples=30, deadline=None)
    @given(probs=st.lists(st.floats(0, 1), min_size=1, max_size=8), t1=st.floats(0.01, 0.99), t2=st.floats(0.01, 0.99))
    def test_monotone_in_threshold(self, probs, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        assert detect_active_classes(probs, hi) <= detect_active_classes(probs, lo)

    def test_bad_threshold(self):
        with pytest.raises(InvalidInputError, match="threshold"):
            detect_active_classes(torch.zeros(3), 1.0)
