"""CBAM gates, deformable sampling, mask partition, and the local gating module."""
import torch
import torch.nn as nn
import torch.nn.functional as F
import pytest

from hsicolor.attention import (CascadeDeformable, Cbam, ChannelGate,
                                DeformableUnit, DepthwiseSeparableConv,
                                LocalGating, SaliencyMasks, SparsifyStage,
                                deformable_sample, sparsify_parts)


def _zero_module(mod):
    with torch.no_grad():
        for p in mod.parameters():
            p.zero_()


# ---------------------------------------------------------------------------
# CBAM
# ---------------------------------------------------------------------------

def test_cbam_zero_params_scale_quarter():
    cbam = Cbam(8)
    _zero_module(cbam)
    x = torch.randn(2, 8, 6, 6, generator=torch.Generator().manual_seed(70))
    assert torch.equal(cbam(x), 0.25 * x)  # both gates sigmoid(0) = 0.5


def test_cbam_matches_formula_reference():
    torch.manual_seed(71)
    cbam = Cbam(4, reduction=2)
    x = torch.randn(1, 4, 4, 4)

    def mlp(v):  # 1x1 convs on a (1, C, 1, 1) descriptor act as linears
        w1, b1 = cbam.channel.mlp[0].weight, cbam.channel.mlp[0].bias
        w2, b2 = cbam.channel.mlp[2].weight, cbam.channel.mlp[2].bias
        h = torch.relu(w1.squeeze(-1).squeeze(-1) @ v + b1)
        return w2.squeeze(-1).squeeze(-1) @ h + b2

    with torch.no_grad():
        g_ch = torch.sigmoid(mlp(x.mean(dim=(2, 3))[0]) + mlp(x.amax(dim=3).amax(dim=2)[0]))
        xc = x * g_ch.view(1, 4, 1, 1)
        pooled = torch.cat([xc.mean(1, keepdim=True), xc.amax(1, keepdim=True)], 1)
        g_spa = torch.sigmoid(cbam.spatial.conv(pooled))
        want = xc * g_spa
        got = cbam(x)
    assert torch.allclose(got, want, rtol=1e-6, atol=1e-7)


def test_cbam_gates_open_interval_and_shape():
    torch.manual_seed(72)
    cbam = Cbam(8)
    x = torch.randn(2, 8, 16, 16)
    g_ch = cbam.channel(x)
    g_spa = cbam.spatial(x)
    for g in (g_ch, g_spa):
        assert (g > 0).all() and (g < 1).all()
    assert cbam(x).shape == x.shape


def test_channel_gate_pools_shape():
    gate = ChannelGate(6, reduction=8)  # hidden width floors to 1
    out = gate(torch.randn(3, 6, 5, 7))
    assert out.shape == (3, 6, 1, 1)


# ---------------------------------------------------------------------------
# Deformable sampling
# ---------------------------------------------------------------------------

def test_zero_offset_equals_dense_conv():
    # float64: bilinear weights at integer taps are exact, so the identity
    # holds to machine precision
    gen = torch.Generator().manual_seed(73)
    for _ in range(10):
        c_in = int(torch.randint(1, 5, (1,), generator=gen))
        c_out = int(torch.randint(1, 5, (1,), generator=gen))
        h = int(torch.randint(3, 12, (1,), generator=gen))
        w = int(torch.randint(3, 12, (1,), generator=gen))
        x = torch.randn(2, c_in, h, w, generator=gen, dtype=torch.float64)
        weight = torch.randn(c_out, c_in, 3, 3, generator=gen, dtype=torch.float64)
        bias = torch.randn(c_out, generator=gen, dtype=torch.float64)
        got = deformable_sample(x, torch.zeros(2, 18, h, w, dtype=torch.float64),
                                weight, bias)
        want = F.conv2d(x, weight, bias, padding=1)
        assert (got - want).abs().max() < 1e-6


def test_zero_offset_float32_within_grid_noise():
    # sampling grids are normalized and unnormalized in float32, which leaves
    # ulp-scale fractional weights at integer taps; the deviation from the
    # dense conv stays at relative rounding level
    gen = torch.Generator().manual_seed(85)
    x = torch.randn(2, 4, 9, 11, generator=gen)
    weight = torch.randn(3, 4, 3, 3, generator=gen)
    got = deformable_sample(x, torch.zeros(2, 18, 9, 11), weight)
    want = F.conv2d(x, weight, padding=1)
    assert torch.allclose(got, want, rtol=1e-5, atol=1e-5)


def test_unit_offset_equals_shifted_conv():
    # dx = +1 everywhere samples x at columns j+kx, i.e. a conv whose
    # horizontal window starts at the output column instead of one left of it
    gen = torch.Generator().manual_seed(74)
    x = torch.randn(1, 3, 8, 9, generator=gen, dtype=torch.float64)
    weight = torch.randn(2, 3, 3, 3, generator=gen, dtype=torch.float64)
    offsets = torch.zeros(1, 18, 8, 9, dtype=torch.float64)
    offsets[:, 1::2] = 1.0
    got = deformable_sample(x, offsets, weight)
    want = F.conv2d(F.pad(x, (0, 2, 1, 1)), weight)
    assert (got - want).abs().max() < 1e-9


def test_half_offset_on_ramp_hits_midpoints():
    w = 7
    ramp = torch.arange(float(w)).view(1, 1, 1, w).expand(1, 1, 5, w).contiguous()
    weight = torch.zeros(1, 1, 3, 3)
    weight[0, 0, 1, 1] = 1.0  # center tap only
    offsets = torch.zeros(1, 18, 5, w)
    offsets[:, 9] = 0.5  # center tap dx = +0.5
    out = deformable_sample(ramp, offsets, weight)
    want = ramp[..., :-1] + 0.5
    assert torch.allclose(out[..., :-1], want, atol=1e-5)


def test_deformable_rejects_bad_shapes():
    x = torch.randn(1, 3, 4, 4)
    with pytest.raises(ValueError):
        deformable_sample(x, torch.zeros(1, 18, 4, 4), torch.randn(2, 3, 5, 5))
    with pytest.raises(ValueError):
        deformable_sample(x, torch.zeros(1, 16, 4, 4), torch.randn(2, 3, 3, 3))


def test_deformable_unit_starts_dense():
    torch.manual_seed(75)
    unit = DeformableUnit(4)
    x = torch.randn(2, 4, 6, 6)
    want = F.conv2d(x, unit.weight, unit.bias, padding=1)
    assert (unit(x) - want).abs().max() < 1e-6


def test_deformable_unit_identity_configuration():
    unit = DeformableUnit(3)
    unit.configure_identity()
    x = torch.randn(1, 3, 5, 8, generator=torch.Generator().manual_seed(76))
    assert (unit(x) - x).abs().max() < 1e-6


def test_cascade_identity_with_averaging_fusion():
    cascade = CascadeDeformable(4)
    for unit in cascade.units:
        unit.configure_identity()
    with torch.no_grad():
        cascade.fuse.weight.zero_()
        cascade.fuse.bias.zero_()
        for k in range(3):
            cascade.fuse.weight[torch.arange(4), torch.arange(4) + 4 * k, 0, 0] = 1 / 3
    x = torch.randn(1, 4, 6, 6, generator=torch.Generator().manual_seed(77))
    assert torch.allclose(cascade(x), x, rtol=1e-5, atol=1e-6)


# ---------------------------------------------------------------------------
# Mask partition
# ---------------------------------------------------------------------------

def test_saliency_masks_zero_convs_give_half():
    masks = SaliencyMasks(5)
    _zero_module(masks)
    x = torch.randn(2, 5, 4, 4, generator=torch.Generator().manual_seed(78))
    m_ch, m_spa = masks(x)
    assert torch.equal(m_ch, torch.full((2, 5, 1, 1), 0.5))
    assert torch.equal(m_spa, torch.full((2, 1, 4, 4), 0.5))


def test_saliency_masks_formula_and_interval():
    torch.manual_seed(79)
    masks = SaliencyMasks(6)
    x = torch.randn(2, 6, 5, 5)
    m_ch, m_spa = masks(x)
    want_ch = torch.sigmoid(masks.channel_conv(x.mean(dim=(2, 3), keepdim=True)))
    want_spa = torch.sigmoid(masks.spatial_conv(x))
    assert torch.allclose(m_ch, want_ch, atol=1e-7)
    assert torch.equal(m_spa, want_spa)
    for m in (m_ch, m_spa):
        assert (m > 0).all() and (m < 1).all()


def test_partition_sums_back_bitwise():
    gen = torch.Generator().manual_seed(80)
    for trial in range(100):
        scale = 2.0 ** int(torch.randint(-40, 41, (1,), generator=gen))
        f = torch.randn(1, 6, 5, 5, generator=gen) * scale
        m_ch = torch.rand(1, 6, 1, 1, generator=gen)
        m_spa = torch.rand(1, 1, 5, 5, generator=gen)
        p1, p2, p3, p4 = sparsify_parts(f, m_ch, m_spa)
        assert torch.equal((p1 + p2) + (p3 + p4), f), f"trial {trial}"


def test_partition_mask_limits():
    f = torch.randn(1, 3, 4, 4, generator=torch.Generator().manual_seed(81))
    ones_ch = torch.ones(1, 3, 1, 1)
    ones_spa = torch.ones(1, 1, 4, 4)
    p1, p2, p3, p4 = sparsify_parts(f, ones_ch, ones_spa)
    assert torch.equal(p1, f)
    for p in (p2, p3, p4):
        assert torch.equal(p, torch.zeros_like(f))


def test_sparsify_stage_summing_fusion_is_identity():
    torch.manual_seed(82)
    stage = SparsifyStage(4)
    with torch.no_grad():
        stage.fuse.weight.zero_()
        stage.fuse.bias.zero_()
        for k in range(4):
            stage.fuse.weight[torch.arange(4), torch.arange(4) + 4 * k, 0, 0] = 1.0
    x = torch.randn(2, 4, 6, 6)
    assert torch.allclose(stage(x), x, rtol=1e-6, atol=1e-6)


# ---------------------------------------------------------------------------
# Local gating assembly
# ---------------------------------------------------------------------------

def test_local_gating_shapes_under_all_flags():
    torch.manual_seed(83)
    x = torch.randn(1, 8, 10, 10)
    for use_dcn in (True, False):
        for use_asm in (True, False):
            mod = LocalGating(8, use_dcn=use_dcn, use_asm=use_asm)
            y = mod(x)
            assert y.shape == x.shape
            assert torch.isfinite(y).all()
            assert (mod.dcn is not None) == use_dcn


def test_local_gating_sparse_branch_isolation():
    # with the sparsification fusion zeroed, attention-side parameters
    # cannot influence the output
    torch.manual_seed(84)
    mod = LocalGating(6)
    with torch.no_grad():
        mod.sparse_fuse.weight.zero_()
        mod.sparse_fuse.bias.zero_()
    x = torch.randn(1, 6, 8, 8)
    with torch.no_grad():
        before = mod(x)
        for m in (mod.cbam, *mod.stages):
            for p in m.parameters():
                p.add_(torch.randn_like(p))
        after = mod(x)
    assert torch.equal(before, after)


def test_depthwise_separable_shape():
    conv = DepthwiseSeparableConv(5, 9)
    assert conv(torch.randn(2, 5, 7, 7)).shape == (2, 9, 7, 7)
