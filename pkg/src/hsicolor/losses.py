"""Adversarial, content, and segmentation losses.

Generator objective: 0.5 * adversarial + 1.0 * content + w(epoch) * seg,
with the content term itself a weighted sum of pixel (L1), perceptual,
edge, total-variation, structural and Fourier-amplitude distances. The
adversarial parts use sigmoid BCE with the non-saturating generator form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

SEG_EPS = 1e-8

# Sobel taps, applied per channel with replicate padding so constant inputs
# have exactly zero response.
_SOBEL_X = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.t().contiguous()

_LUMA = (0.299, 0.587, 0.114)  # BT.601 on [0, 1]-scaled channels


def _to_unit(img: torch.Tensor) -> torch.Tensor:
    return (img + 1.0) * 0.5


def luma(img: torch.Tensor) -> torch.Tensor:
    """(B, 3, H, W) in [0, 1] -> (B, 1, H, W) luminance."""
    r, g, b = img.split(1, dim=1)
    return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b


def sobel_magnitude(img: torch.Tensor) -> torch.Tensor:
    """Per-channel Sobel gradient magnitude with replicate padding."""
    c = img.shape[1]
    kx = _SOBEL_X.to(img.dtype).to(img.device).view(1, 1, 3, 3).repeat(c, 1, 1, 1)
    ky = _SOBEL_Y.to(img.dtype).to(img.device).view(1, 1, 3, 3).repeat(c, 1, 1, 1)
    padded = F.pad(img, (1, 1, 1, 1), mode="replicate")
    gx = F.conv2d(padded, kx, groups=c)
    gy = F.conv2d(padded, ky, groups=c)
    return torch.sqrt(gx * gx + gy * gy + 1e-12)


def gaussian_window(size: int = 11, sigma: float = 1.5,
                    dtype=torch.float32) -> torch.Tensor:
    half = (size - 1) / 2.0
    xs = torch.arange(size, dtype=dtype) - half
    g = torch.exp(-(xs * xs) / (2.0 * sigma * sigma))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim_index(a: torch.Tensor, b: torch.Tensor, data_range: float = 1.0,
               size: int = 11, sigma: float = 1.5) -> torch.Tensor:
    """Mean SSIM over valid 11x11 Gaussian windows of (B, 1, H, W) maps."""
    win = gaussian_window(size, sigma, a.dtype).to(a.device).view(1, 1, size, size)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a = F.conv2d(a, win)
    mu_b = F.conv2d(b, win)
    e_aa = F.conv2d(a * a, win)
    e_bb = F.conv2d(b * b, win)
    e_ab = F.conv2d(a * b, win)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return (num / den).mean()


def total_variation(img: torch.Tensor) -> torch.Tensor:
    """Anisotropic TV: mean absolute horizontal plus vertical differences."""
    dx = (img[..., :, 1:] - img[..., :, :-1]).abs().mean()
    dy = (img[..., 1:, :] - img[..., :-1, :]).abs().mean()
    return dx + dy


def fft_amplitude(img: torch.Tensor) -> torch.Tensor:
    return torch.fft.fft2(img).abs()


class PerceptualFeatures(nn.Module):
    """Fixed random-weight conv pyramid used as the perceptual feature space.

    Weights are drawn from a dedicated generator seeded with a constant, so
    the feature space is identical across runs; parameters are frozen. The
    extractor is a pluggable stand-in for a pretrained network and exposes
    three stages of stride-2 features.
    """

    SEED = 0x5EED

    def __init__(self, in_channels: int = 3, widths: tuple[int, ...] = (16, 32, 64)):
        super().__init__()
        gen = torch.Generator().manual_seed(self.SEED)
        convs = []
        c_in = in_channels
        for c_out in widths:
            conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  * (c_in * 9) ** -0.5)
                conv.bias.zero_()
            convs.append(conv)
            c_in = c_out
        self.convs = nn.ModuleList(convs)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        h = x
        for conv in self.convs:
            h = F.gelu(conv(h))
            feats.append(h)
        return feats


@dataclass
class LossWeights:
    lambda_pix: float = 10.0
    lambda_per: float = 10.0
    lambda_edge: float = 1.0
    lambda_tv: float = 1.0
    lambda_ssim: float = 1.0
    lambda_fft: float = 1.0


class ContentLoss(nn.Module):
    """Weighted sum of the six content terms; returns (total, components)."""

    def __init__(self, weights: LossWeights | None = None):
        super().__init__()
        self.weights = weights or LossWeights()
        self.perceptual = PerceptualFeatures()

    def forward(self, pred: torch.Tensor, target: torch.Tensor):
        if pred.shape != target.shape:
            raise ValueError("pred and target shapes disagree")
        w = self.weights
        l_pix = F.l1_loss(pred, target)
        feats_p = self.perceptual(pred)
        feats_t = self.perceptual(target)
        l_per = sum(F.l1_loss(fp, ft) for fp, ft in zip(feats_p, feats_t))
        l_edge = F.l1_loss(sobel_magnitude(pred), sobel_magnitude(target))
        l_tv = total_variation(pred)
        l_ssim = 1.0 - ssim_index(luma(_to_unit(pred)), luma(_to_unit(target)))
        l_fft = F.l1_loss(fft_amplitude(pred), fft_amplitude(target))
        total = (w.lambda_pix * l_pix + w.lambda_per * l_per
                 + w.lambda_edge * l_edge + w.lambda_tv * l_tv
                 + w.lambda_ssim * l_ssim + w.lambda_fft * l_fft)
        parts = {"pix": l_pix, "per": l_per, "edge": l_edge,
                 "tv": l_tv, "ssim": l_ssim, "fft": l_fft}
        return total, parts


# ---------------------------------------------------------------------------
# Adversarial terms
# ---------------------------------------------------------------------------

def bce_logits(logits: torch.Tensor, target_is_real: bool) -> torch.Tensor:
    target = torch.ones_like(logits) if target_is_real else torch.zeros_like(logits)
    return F.binary_cross_entropy_with_logits(logits, target)


def discriminator_loss(real_logits: dict, fake_logits: dict):
    """Sum over branches of BCE(real as real) + BCE(fake as fake).

    ``real_logits`` / ``fake_logits`` map branch name to a logit tensor.
    Returns (total, per-branch dict). Fake logits should be detached by the
    caller.
    """
    parts = {}
    total = None
    for name in real_logits:
        term = bce_logits(real_logits[name], True) + bce_logits(fake_logits[name], False)
        parts[name] = term
        total = term if total is None else total + term
    return total, parts


def generator_adversarial_loss(fake_logits: dict):
    """Non-saturating form: sum over branches of BCE(fake as real)."""
    parts = {}
    total = None
    for name, logits in fake_logits.items():
        term = bce_logits(logits, True)
        parts[name] = term
        total = term if total is None else total + term
    return total, parts


# ---------------------------------------------------------------------------
# Segmentation network and loss
# ---------------------------------------------------------------------------

class SegmentationNet(nn.Module):
    """Compact encoder-decoder with a dilated context branch.

    Stands in for a large pretrained segmenter: strided encoder, two dilated
    3x3 context convs (rates 2 and 4), bilinear decoder with skip, 1x1
    classifier at full resolution.
    """

    def __init__(self, num_classes: int, in_channels: int = 3, width: int = 32):
        super().__init__()
        self.num_classes = num_classes
        self.enc1 = nn.Conv2d(in_channels, width, 3, stride=2, padding=1)
        self.enc2 = nn.Conv2d(width, 2 * width, 3, stride=2, padding=1)
        self.ctx1 = nn.Conv2d(2 * width, 2 * width, 3, padding=2, dilation=2)
        self.ctx2 = nn.Conv2d(2 * width, 2 * width, 3, padding=4, dilation=4)
        self.dec1 = nn.Conv2d(2 * width, width, 3, padding=1)
        self.dec2 = nn.Conv2d(2 * width, width, 3, padding=1)
        self.classify = nn.Conv2d(width, num_classes, 1)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        e1 = F.relu(self.enc1(img))
        e2 = F.relu(self.enc2(e1))
        c = F.relu(self.ctx1(e2))
        c = F.relu(self.ctx2(c))
        d = F.interpolate(F.relu(self.dec1(c)), size=e1.shape[-2:],
                          mode="bilinear", align_corners=False)
        d = F.relu(self.dec2(torch.cat([d, e1], dim=1)))
        d = F.interpolate(d, size=img.shape[-2:], mode="bilinear",
                          align_corners=False)
        return self.classify(d)


def segmentation_loss(segnet: SegmentationNet, pred_rgb: torch.Tensor,
                      mask: torch.Tensor) -> torch.Tensor:
    """Mean pixel cross-entropy of segnet(pred) against integer labels,
    stabilized as -log(p + 1e-8)."""
    if mask.min() < 0 or mask.max() >= segnet.num_classes:
        raise ValueError(
            f"labels must lie in [0, {segnet.num_classes}), got "
            f"[{int(mask.min())}, {int(mask.max())}]")
    logits = segnet(pred_rgb)
    prob = torch.softmax(logits, dim=1)
    picked = prob.gather(1, mask.unsqueeze(1)).squeeze(1)
    return -(torch.log(picked + SEG_EPS)).mean()


def pixel_accuracy(segnet: SegmentationNet, rgb: torch.Tensor,
                   mask: torch.Tensor) -> float:
    with torch.no_grad():
        pred = segnet(rgb).argmax(dim=1)
        return float((pred == mask).float().mean())


def pretrain_segmentation(samples, num_classes: int, epochs: int = 20,
                          lr: float = 1e-3, target_acc: float = 0.95,
                          seed: int = 0, log=None) -> SegmentationNet:
    """Train the segmenter on (rgb, mask) pairs until the pixel accuracy
    target is met, then freeze it. Raises if the target is out of reach.
    """
    torch.manual_seed(seed)
    segnet = SegmentationNet(num_classes)
    opt = torch.optim.Adam(segnet.parameters(), lr=lr)
    rgbs = torch.stack([torch.from_numpy(np.ascontiguousarray(s.rgb))
                        .permute(2, 0, 1) for s in samples])
    masks = torch.stack([torch.from_numpy(np.ascontiguousarray(s.mask))
                         for s in samples])
    acc = 0.0
    for epoch in range(epochs):
        order = np.random.default_rng((seed, epoch)).permutation(len(samples))
        for idx in order:
            rgb = rgbs[idx:idx + 1]
            mask = masks[idx:idx + 1]
            opt.zero_grad()
            loss = F.cross_entropy(segnet(rgb), mask)
            loss.backward()
            opt.step()
        correct = 0
        total = 0
        with torch.no_grad():
            for i in range(len(samples)):
                pred = segnet(rgbs[i:i + 1]).argmax(dim=1)
                correct += int((pred == masks[i:i + 1]).sum())
                total += masks[i].numel()
        acc = correct / total
        if log is not None:
            log(f"seg-pretrain epoch={epoch} acc={acc:.4f}")
        if acc >= target_acc:
            break
    if acc < target_acc:
        raise RuntimeError(
            f"segmentation pretraining stalled at accuracy {acc:.4f} "
            f"(target {target_acc}) after {epochs} epochs")
    segnet.eval()
    for p in segnet.parameters():
        p.requires_grad_(False)
    return segnet
