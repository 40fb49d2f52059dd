"""Selective state-space scanning over spatial and spectral sequences.

The core recurrence, for step sizes ``delta > 0``, diagonal state matrix
``A`` and per-step projections ``B_t``, ``C_t``:

    h_t = exp(delta_t * A) * h_{t-1} + (delta_t * B_t) * u_t,   h_0 = 0
    y_t = C_t . h_t + D * u_t

``selective_scan`` evaluates it by parallel-prefix doubling over the affine
maps h -> a*h + x (log2 T elementwise rounds instead of a per-step Python
loop) and supplies its own adjoint: the gradient recurrence
lambda_t = g_t + a_{t+1} * lambda_{t+1} is just the same scan run backwards,
so the backward pass needs no saved per-step graph. All decay factors
satisfy 0 < a <= 1 whenever A <= 0, keeping the doubling products stable.
"""
from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import ChannelGate


def _linear_scan(a: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """h_t = a_t * h_{t-1} + x_t with h_0 = 0, along dim 1 of (B, T, d, s)."""
    T = a.shape[1]
    offset = 1
    while offset < T:
        x_prev = F.pad(x[:, :-offset], (0, 0, 0, 0, offset, 0))
        x = x + a * x_prev
        if offset * 2 < T:  # the last decay product is never read
            a_prev = F.pad(a[:, :-offset], (0, 0, 0, 0, offset, 0), value=1.0)
            a = a * a_prev
        offset *= 2
    return x


class _SelectiveScanFn(torch.autograd.Function):
    """Scan core with a hand-written adjoint (a reversed linear scan)."""

    @staticmethod
    def forward(ctx, u, delta, A, B, C):
        A3 = A if A.dim() == 3 else A.unsqueeze(0)
        a = torch.exp(delta.unsqueeze(-1) * A3.unsqueeze(1))   # (b, T, d, s)
        x = (delta * u).unsqueeze(-1) * B.unsqueeze(2)         # (b, T, d, s)
        h = _linear_scan(a, x)
        y = torch.einsum("btds,bts->btd", h, C)
        ctx.save_for_backward(u, delta, A, B, C, a, h)
        return y

    @staticmethod
    def backward(ctx, grad_y):
        u, delta, A, B, C, a, h = ctx.saved_tensors
        A3 = A if A.dim() == 3 else A.unsqueeze(0)
        grad_y = grad_y.contiguous()
        # gradient reaching h_t directly from y_t
        g = grad_y.unsqueeze(-1) * C.unsqueeze(2)              # (b, T, d, s)
        # lambda_t = g_t + a_{t+1} * lambda_{t+1}: reversed-time linear scan
        a_next = torch.cat([a[:, 1:], torch.ones_like(a[:, :1])], dim=1)
        lam = _linear_scan(a_next.flip(1), g.flip(1)).flip(1)
        h_prev = torch.cat([torch.zeros_like(h[:, :1]), h[:, :-1]], dim=1)

        grad_a = lam * h_prev
        da = grad_a * a                                        # through exp
        gxB = (lam * B.unsqueeze(2)).sum(-1)                   # (b, T, d)
        grad_delta = (da * A3.unsqueeze(1)).sum(-1) + gxB * u
        grad_u = gxB * delta
        grad_B = (lam * (delta * u).unsqueeze(-1)).sum(2)
        grad_C = torch.einsum("btds,btd->bts", h, grad_y)
        grad_A = (da * delta.unsqueeze(-1)).sum(1)             # (b, d, s)
        if A.dim() == 2:
            grad_A = grad_A.sum(0)
        return grad_u, grad_delta, grad_A, grad_B, grad_C


def selective_scan(u: torch.Tensor, delta: torch.Tensor, A: torch.Tensor,
                   B: torch.Tensor, C: torch.Tensor,
                   D: torch.Tensor | None = None) -> torch.Tensor:
    """Run the selective scan along dim 1.

    Args:
        u: (batch, T, dim) input sequence.
        delta: (batch, T, dim) positive step sizes.
        A: (dim, state) or (batch, dim, state) diagonal state matrix.
        B: (batch, T, state) input projection per step.
        C: (batch, T, state) output projection per step.
        D: optional (dim,) or (batch, dim) skip gain.

    Returns:
        (batch, T, dim) outputs.
    """
    if u.dim() != 3:
        raise ValueError(f"u must be (batch, T, dim), got {tuple(u.shape)}")
    if delta.shape != u.shape:
        raise ValueError("delta shape must match u")
    if (delta <= 0).any():
        raise ValueError("delta must be strictly positive")
    batch, T, dim = u.shape
    state = A.shape[-1]
    if A.shape not in ((dim, state), (batch, dim, state)):
        raise ValueError(f"A shape {tuple(A.shape)} incompatible with u")
    if B.shape != (batch, T, state) or C.shape != (batch, T, state):
        raise ValueError("B and C must be (batch, T, state)")

    y = _SelectiveScanFn.apply(u, delta, A, B, C)
    if D is not None:
        D_b = D if D.dim() == 2 else D.unsqueeze(0)
        y = y + D_b.unsqueeze(1) * u
    return y


def cross_scan(x: torch.Tensor) -> torch.Tensor:
    """Flatten (B, D, H, W) along the four scan orders.

    Order 0: row-major; 1: row-major reversed; 2: column-major; 3: column-major
    reversed. Returns (B, 4, D, H*W).
    """
    rows = x.flatten(2)
    cols = x.transpose(2, 3).flatten(2)
    return torch.stack([rows, rows.flip(-1), cols, cols.flip(-1)], dim=1)


def cross_merge(ys: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """Undo the four scan orders of :func:`cross_scan` and sum. ys: (B, 4, D, L)."""
    b, _, d, _ = ys.shape
    y0 = ys[:, 0].view(b, d, h, w)
    y1 = ys[:, 1].flip(-1).view(b, d, h, w)
    y2 = ys[:, 2].view(b, d, w, h).transpose(2, 3)
    y3 = ys[:, 3].flip(-1).view(b, d, w, h).transpose(2, 3)
    return y0 + y1 + y2 + y3


def _inv_softplus(y: torch.Tensor) -> torch.Tensor:
    return y + torch.log(-torch.expm1(-y))


class SpatialScan2D(nn.Module):
    """Four-direction 2D selective scan with gating (VSS-style block body).

    Input projection doubles the width and splits into a scan path and a
    SiLU gate; the scan path passes a depthwise 3x3 conv, is scanned along
    the four orders with direction-specific parameters, merged, layer
    normalized, gated and projected back.
    """

    def __init__(self, channels: int, d_state: int = 8, expansion: int = 2,
                 dt_rank: int | None = None):
        super().__init__()
        self.channels = channels
        self.d_state = d_state
        self.d_inner = channels * expansion
        self.dt_rank = dt_rank or max(1, channels // 16)
        k = 4  # scan directions

        self.in_proj = nn.Linear(channels, 2 * self.d_inner, bias=False)
        self.conv = nn.Conv2d(self.d_inner, self.d_inner, 3, padding=1,
                              groups=self.d_inner)
        self.x_proj_weight = nn.Parameter(
            torch.randn(k, self.dt_rank + 2 * d_state, self.d_inner)
            / math.sqrt(self.d_inner))
        self.dt_weight = nn.Parameter(
            torch.randn(k, self.d_inner, self.dt_rank) / math.sqrt(self.dt_rank))
        dt = torch.exp(torch.rand(k, self.d_inner)
                       * (math.log(0.1) - math.log(1e-3)) + math.log(1e-3))
        self.dt_bias = nn.Parameter(_inv_softplus(dt))
        # A = -softplus(a_param); init spreads decay rates over 1..d_state
        a0 = torch.arange(1, d_state + 1, dtype=torch.float32)
        self.a_param = nn.Parameter(
            _inv_softplus(a0).expand(k, self.d_inner, d_state).contiguous())
        self.d_skip = nn.Parameter(torch.ones(k, self.d_inner))
        self.out_norm = nn.LayerNorm(self.d_inner)
        self.out_proj = nn.Linear(self.d_inner, channels, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        l = h * w
        xz = self.in_proj(x.permute(0, 2, 3, 1))
        xs, z = xz.split(self.d_inner, dim=-1)
        xs = F.silu(self.conv(xs.permute(0, 3, 1, 2)))

        seqs = cross_scan(xs)                                   # (b, 4, d, l)
        proj = torch.einsum("bkdl,kcd->bkcl", seqs, self.x_proj_weight)
        dt, Bp, Cp = proj.split([self.dt_rank, self.d_state, self.d_state], dim=2)
        delta = F.softplus(
            torch.einsum("bkrl,kdr->bkdl", dt, self.dt_weight)
            + self.dt_bias.unsqueeze(0).unsqueeze(-1))

        # fold directions into the batch for one scan call
        u = seqs.permute(0, 1, 3, 2).reshape(b * 4, l, self.d_inner)
        delta = delta.permute(0, 1, 3, 2).reshape(b * 4, l, self.d_inner)
        Bp = Bp.permute(0, 1, 3, 2).reshape(b * 4, l, self.d_state)
        Cp = Cp.permute(0, 1, 3, 2).reshape(b * 4, l, self.d_state)
        A = (-F.softplus(self.a_param)).repeat(b, 1, 1)
        D = self.d_skip.repeat(b, 1)
        y = selective_scan(u, delta, A, Bp, Cp, D)

        y = y.view(b, 4, l, self.d_inner).permute(0, 1, 3, 2)
        y = cross_merge(y, h, w).permute(0, 2, 3, 1)
        y = self.out_norm(y) * F.silu(z)
        return self.out_proj(y).permute(0, 3, 1, 2)


class SpectralScanBranch(nn.Module):
    """Intra-group spectral scan over the channel dimension.

    Channels are zero-padded to a multiple of ``group_size`` and reshaped so
    each (pixel, group) is an independent scalar sequence of length
    ``group_size``; one shared parameter head drives every group. The scanned
    feature is group-normalized, SiLU-activated, channel-recalibrated and
    passed through a residual 3x3 conv block. Everything except that final
    conv block acts pointwise across space.
    """

    def __init__(self, channels: int, group_size: int = 8, d_state: int = 8):
        super().__init__()
        self.channels = channels
        self.group_size = group_size
        self.d_state = d_state
        self.x_proj = nn.Linear(1, 1 + 2 * d_state, bias=False)
        self.dt_proj = nn.Linear(1, 1)
        with torch.no_grad():
            self.dt_proj.bias.fill_(_inv_softplus(torch.tensor(0.05)).item())
        a0 = torch.arange(1, d_state + 1, dtype=torch.float32)
        self.a_param = nn.Parameter(_inv_softplus(a0).view(1, d_state).clone())
        self.d_skip = nn.Parameter(torch.ones(1))
        groups = channels // group_size if channels % group_size == 0 else 1
        self.norm = nn.GroupNorm(groups, channels)
        self.gate = ChannelGate(channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        with torch.no_grad():  # near-identity block at init
            self.conv2.weight.mul_(1e-3)
            self.conv2.bias.zero_()

    def _scan(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        g = self.group_size
        pad = (-c) % g
        xp = F.pad(x, (0, 0, 0, 0, 0, pad)) if pad else x
        cp = c + pad
        seq = xp.permute(0, 2, 3, 1).reshape(b * h * w * (cp // g), g, 1)
        proj = self.x_proj(seq)
        dt, Bp, Cp = proj.split([1, self.d_state, self.d_state], dim=-1)
        delta = F.softplus(self.dt_proj(dt))
        A = -F.softplus(self.a_param)
        y = selective_scan(seq, delta, A, Bp, Cp, self.d_skip)
        y = y.reshape(b, h, w, cp).permute(0, 3, 1, 2)
        return y[:, :c]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = F.silu(self.norm(self._scan(x)))
        y = y * self.gate(y)
        return y + self.conv2(F.gelu(self.conv1(y)))
