"""Patch critic conv arithmetic and the statistics critic's pooling."""
import torch
import pytest

from hsicolor.discriminators import PatchDiscriminator, StatsDiscriminator


def conv_out(size, metas):
    for k, s, p in metas:
        size = (size + 2 * p - k) // s + 1
    return size


def receptive_field(metas):
    rf, jump = 1, 1
    for k, s, _ in metas:
        rf += (k - 1) * jump
        jump *= s
    return rf


def test_patch_arithmetic_256_gives_30():
    disc = PatchDiscriminator(cond_channels=8)
    metas = disc.conv_meta()
    assert conv_out(256, metas) == 30
    assert receptive_field(metas) == 70


def test_patch_map_shapes_match_arithmetic():
    torch.manual_seed(110)
    disc = PatchDiscriminator(cond_channels=4, base_width=8)
    metas = disc.conv_meta()
    for size in (32, 48, 64, 128):
        cond = torch.randn(1, 4, size, size)
        img = torch.randn(1, 3, size, size)
        with torch.no_grad():
            score = disc(cond, img)
        n = conv_out(size, metas)
        assert score.shape == (1, 1, n, n), size
    assert conv_out(128, metas) == 14


def test_patch_layer_layout():
    disc = PatchDiscriminator(cond_channels=2, base_width=16)
    assert [m[1] for m in disc.conv_meta()] == [2, 2, 2, 1, 1]
    convs = [m for m in disc.net if isinstance(m, torch.nn.Conv2d)]
    assert [c.out_channels for c in convs] == [16, 32, 64, 128, 1]
    norms = [m for m in disc.net if isinstance(m, torch.nn.InstanceNorm2d)]
    assert len(norms) == 3  # first stage and the head have no norm


def test_patch_rejects_misaligned_inputs():
    disc = PatchDiscriminator(cond_channels=2, base_width=8)
    with pytest.raises(ValueError):
        disc(torch.zeros(1, 2, 32, 32), torch.zeros(1, 3, 32, 30))


def test_stats_constant_image_zero_std():
    torch.manual_seed(111)
    disc = StatsDiscriminator()
    img = torch.full((2, 3, 32, 32), 0.3)
    stats = disc.statistics(img)
    # replicate padding keeps a constant image constant through every conv
    for std in stats[1::2]:
        assert std.abs().max() < 1e-5
    logits = disc(img)
    assert logits.shape == (2, 6)
    assert torch.isfinite(logits).all()


def test_stats_match_explicit_pooling():
    torch.manual_seed(112)
    disc = StatsDiscriminator(widths=(8, 16, 32))
    img = torch.randn(1, 3, 32, 32)
    stats = disc.statistics(img)
    f = img
    for i, conv in enumerate(disc.convs):
        f = conv(f)
        b, c = f.shape[:2]
        flat = f.reshape(b, c, -1)
        want_mean = flat.mean(dim=2)
        want_std = flat.var(dim=2, unbiased=False).sqrt()
        assert torch.allclose(stats[2 * i], want_mean, atol=1e-6)
        assert torch.allclose(stats[2 * i + 1], want_std, atol=1e-5)
        f = torch.nn.functional.leaky_relu(f, 0.2)


def test_stats_logits_use_independent_heads():
    torch.manual_seed(113)
    disc = StatsDiscriminator(widths=(4, 8, 16))
    img = torch.randn(1, 3, 16, 16)
    base = disc(img)
    with torch.no_grad():
        for p in disc.heads[0].parameters():
            p.add_(1.0)
    bumped = disc(img)
    assert not torch.equal(base[:, 0], bumped[:, 0])
    assert torch.equal(base[:, 1:], bumped[:, 1:])


def test_stats_circular_padding_shift_invariance():
    torch.manual_seed(114)
    disc = StatsDiscriminator(widths=(4, 8, 16), padding_mode="circular")
    img = torch.randn(1, 3, 32, 32)
    rolled = torch.roll(img, shifts=(8, 16), dims=(2, 3))
    a = disc.statistics(img)
    b = disc.statistics(rolled)
    for s1, s2 in zip(a, b):
        assert torch.allclose(s1, s2, atol=1e-5)


def test_both_critics_give_adversarial_gradient():
    torch.manual_seed(115)
    fake = torch.rand(1, 3, 32, 32, requires_grad=True)
    cond = torch.rand(1, 4, 32, 32)
    patch = PatchDiscriminator(cond_channels=4, base_width=8)
    stats = StatsDiscriminator(widths=(4, 8, 16))
    loss = patch(cond, fake).mean() + stats(fake).mean()
    loss.backward()
    assert fake.grad is not None
    assert fake.grad.abs().sum() > 0
