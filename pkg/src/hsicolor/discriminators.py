"""Two adversaries: a conditional patch critic and an unconditional
statistics critic.

The patch critic is the standard 70x70-receptive-field stack (4-wide
kernels, strides 2/2/2/1, instance norm from the second stage) applied to
the channel concat of the conditioning cube and the image; it emits a logit
map. The statistics critic pools per-channel spatial mean and std at three
backbone scales and scores each statistic vector with its own small MLP, so
it judges distributions rather than positions.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class PatchDiscriminator(nn.Module):
    """Conditional patch critic over concat(condition, image)."""

    def __init__(self, cond_channels: int, img_channels: int = 3,
                 base_width: int = 64):
        super().__init__()
        w = base_width
        layers = [
            nn.Conv2d(cond_channels + img_channels, w, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        for mult_in, mult_out, stride in ((1, 2, 2), (2, 4, 2), (4, 8, 1)):
            layers += [
                nn.Conv2d(w * mult_in, w * mult_out, 4, stride=stride, padding=1),
                nn.InstanceNorm2d(w * mult_out),
                nn.LeakyReLU(0.2, inplace=True),
            ]
        layers.append(nn.Conv2d(w * 8, 1, 4, stride=1, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, cond: torch.Tensor, img: torch.Tensor) -> torch.Tensor:
        if cond.shape[-2:] != img.shape[-2:]:
            raise ValueError("condition and image spatial dims disagree")
        return self.net(torch.cat([cond, img], dim=1))

    def conv_meta(self) -> list[tuple[int, int, int]]:
        """(kernel, stride, padding) of each conv, for arithmetic checks."""
        return [(m.kernel_size[0], m.stride[0], m.padding[0])
                for m in self.net if isinstance(m, nn.Conv2d)]


class StatsDiscriminator(nn.Module):
    """Unconditional critic over per-scale feature statistics.

    The backbone is three stride-2 convs with replicate padding (a constant
    image therefore yields constant features and zero stds). Statistics are
    taken on each conv's pre-activation output; every (scale, statistic)
    pair owns an independent two-layer MLP producing one logit, six in all.
    """

    def __init__(self, img_channels: int = 3, widths: tuple[int, ...] = (32, 64, 128),
                 padding_mode: str = "replicate"):
        super().__init__()
        convs = []
        c_in = img_channels
        for c_out in widths:
            convs.append(nn.Conv2d(c_in, c_out, 4, stride=2, padding=1,
                                   padding_mode=padding_mode))
            c_in = c_out
        self.convs = nn.ModuleList(convs)
        self.heads = nn.ModuleList(
            nn.Sequential(nn.Linear(c, c), nn.LeakyReLU(0.2, inplace=True),
                          nn.Linear(c, 1))
            for c in widths for _ in range(2))

    def statistics(self, img: torch.Tensor) -> list[torch.Tensor]:
        """Per-scale (mean, std) vectors, each (B, C_scale)."""
        stats = []
        h = img
        for conv in self.convs:
            f = conv(h)
            flat = f.flatten(2)
            stats.append(flat.mean(dim=2))
            stats.append(flat.std(dim=2, unbiased=False))
            h = F.leaky_relu(f, 0.2)
        return stats

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        """Six logits (B, 6): scales outer, (mean, std) inner."""
        stats = self.statistics(img)
        logits = [head(s) for head, s in zip(self.heads, stats)]
        return torch.cat(logits, dim=1)
