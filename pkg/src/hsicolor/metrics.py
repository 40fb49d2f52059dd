"""Reference image quality metrics (numpy, float64 accumulation).

PSNR is capped at 100 dB. SSIM uses 11x11 Gaussian windows (sigma 1.5) over
valid positions with C1=(0.01 R)^2, C2=(0.03 R)^2. The universal quality
index uses 8x8 sliding windows with sample statistics and an epsilon-guarded
denominator, so constant-vs-constant windows score 0. Color images are
compared on BT.601 luminance.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP = 100.0
_LUMA = np.array([0.299, 0.587, 0.114])


def _as_luma(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ _LUMA
    if img.ndim == 2:
        return img
    raise ValueError(f"expected (H, W) or (H, W, 3), got {img.shape}")


def psnr(pred: np.ndarray, target: np.ndarray, data_range: float = 1.0) -> float:
    """10*log10(range^2 / MSE), capped at 100 dB (MSE == 0 hits the cap)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("shapes disagree")
    mse = float(np.mean((pred - target) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(data_range * data_range / mse))


def _window_sums(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    views = sliding_window_view(img, kernel.shape)
    return np.einsum("ijkl,kl->ij", views, kernel)


def ssim(pred: np.ndarray, target: np.ndarray, data_range: float = 1.0,
         size: int = 11, sigma: float = 1.5) -> float:
    """Mean SSIM over valid Gaussian windows of the luminance maps."""
    a = _as_luma(pred)
    b = _as_luma(target)
    if a.shape != b.shape:
        raise ValueError("shapes disagree")
    if min(a.shape) < size:
        raise ValueError(f"image smaller than the {size}x{size} window")
    half = (size - 1) / 2.0
    xs = np.arange(size) - half
    g = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    g /= g.sum()
    kernel = np.outer(g, g)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a = _window_sums(a, kernel)
    mu_b = _window_sums(b, kernel)
    var_a = _window_sums(a * a, kernel) - mu_a ** 2
    var_b = _window_sums(b * b, kernel) - mu_b ** 2
    cov = _window_sums(a * b, kernel) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def uiqi(pred: np.ndarray, target: np.ndarray, size: int = 8,
         eps: float = 1e-12) -> float:
    """Universal quality index over 8x8 sliding windows (stride 1).

    Q = 4*cov*mu_a*mu_b / ((var_a+var_b)*(mu_a^2+mu_b^2) + eps) per window,
    averaged; the epsilon makes constant-against-constant windows score 0.
    """
    a = _as_luma(pred)
    b = _as_luma(target)
    if a.shape != b.shape:
        raise ValueError("shapes disagree")
    if min(a.shape) < size:
        raise ValueError(f"image smaller than the {size}x{size} window")
    n = size * size
    views_a = sliding_window_view(a, (size, size))
    views_b = sliding_window_view(b, (size, size))
    mu_a = views_a.mean(axis=(-2, -1))
    mu_b = views_b.mean(axis=(-2, -1))
    # centered sums: cancellation-free, so constant windows give cov == 0
    ca = views_a - mu_a[..., None, None]
    cb = views_b - mu_b[..., None, None]
    var_a = np.einsum("ijkl,ijkl->ij", ca, ca) / (n - 1)
    var_b = np.einsum("ijkl,ijkl->ij", cb, cb) / (n - 1)
    cov = np.einsum("ijkl,ijkl->ij", ca, cb) / (n - 1)
    q = 4.0 * cov * mu_a * mu_b / ((var_a + var_b) * (mu_a ** 2 + mu_b ** 2) + eps)
    return float(np.mean(q))


def metric_report(rows: list[tuple[str, float, float, float]]) -> str:
    """Line-oriented report: one row per image plus a final mean row.

    Row format: ``name psnr=<v> ssim=<v> uiqi=<v>``.
    """
    if not rows:
        raise ValueError("no rows to report")
    lines = []
    for name, p, s, u in rows:
        lines.append(f"{name} psnr={p:.4f} ssim={s:.6f} uiqi={u:.6f}")
    means = [float(np.mean([r[i] for r in rows])) for i in (1, 2, 3)]
    lines.append(f"mean psnr={means[0]:.4f} ssim={means[1]:.6f} uiqi={means[2]:.6f}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict[str, tuple[float, float, float]]:
    """Inverse of :func:`metric_report` (keyed by row name)."""
    out = {}
    for line in text.strip().splitlines():
        name, *fields = line.split()
        vals = tuple(float(f.split("=")[1]) for f in fields)
        out[name] = vals
    return out
