"""Fast self-contained property checks, printable as PASS/FAIL lines.

These are the quick invariants a user can run after install (``hsicolor
selftest``): wavelet perfect reconstruction, frequency-module identity
configuration, bitwise mask partitions, the scan against a sequential
oracle, a small finite-difference gradient probe, zero-offset deformable
equivalence, schedule values, and metric closed forms. The full test suite
covers the same ground more exhaustively.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .attention import DeformableUnit, SaliencyMasks, sparsify_parts
from .frequency import FrequencyEnhancement, dwt2, gated_residual, iwt2
from .fusion import MultiDomainFusion
from .metrics import psnr, ssim, uiqi
from .statespace import selective_scan
from .train import TrainConfig, lr_schedule, seg_schedule


def scan_oracle(u, delta, A, B, C, D=None):
    """Literal sequential recurrence in float64 numpy."""
    u, delta, B, C = (np.asarray(a, dtype=np.float64) for a in (u, delta, B, C))
    A = np.asarray(A, dtype=np.float64)
    b, T, d = u.shape
    s = A.shape[-1]
    A3 = A if A.ndim == 3 else A[None]
    y = np.zeros((b, T, d))
    for bi in range(b):
        Ab = A3[min(bi, A3.shape[0] - 1)]
        h = np.zeros((d, s))
        for t in range(T):
            h = (np.exp(delta[bi, t][:, None] * Ab) * h
                 + (delta[bi, t] * u[bi, t])[:, None] * B[bi, t][None, :])
            y[bi, t] = h @ C[bi, t]
    if D is not None:
        D2 = np.asarray(D, dtype=np.float64)
        D2 = D2 if D2.ndim == 2 else D2[None]
        y = y + D2[:, None, :] * u
    return y


def check_wavelet(trials: int = 100) -> tuple[bool, str]:
    g = torch.Generator().manual_seed(101)
    worst_rt = worst_en = 0.0
    for _ in range(trials):
        c = int(torch.randint(1, 17, (1,), generator=g))
        h = 2 * int(torch.randint(4, 33, (1,), generator=g))
        w = 2 * int(torch.randint(4, 33, (1,), generator=g))
        x = torch.randn(1, c, h, w, generator=g)
        ll, lh, hl, hh = dwt2(x)
        back = iwt2(ll, lh, hl, hh)
        worst_rt = max(worst_rt, float((back - x).norm() / x.norm()))
        e_in = float(x.pow(2).sum())
        e_out = float(sum(b.pow(2).sum() for b in (ll, lh, hl, hh)))
        worst_en = max(worst_en, abs(e_out - e_in) / e_in)
    ok = worst_rt < 1e-5 and worst_en < 1e-5
    return ok, f"roundtrip_rel={worst_rt:.2e} energy_rel={worst_en:.2e}"


def check_fem_identity(trials: int = 100) -> tuple[bool, str]:
    torch.manual_seed(202)
    fem = FrequencyEnhancement(8, 16, 16)
    fem.configure_identity()
    worst = 0.0
    exact = True
    for _ in range(trials):
        x = torch.randn(1, 8, 16, 16)
        with torch.no_grad():
            worst = max(worst, float((fem(x) - x).abs().max()))
        base, y = torch.randn(2, 4, 5, 5), torch.randn(2, 4, 5, 5)
        exact = exact and torch.equal(
            gated_residual(base, y, torch.tensor(0.0)), base)
    ok = worst < 1e-5 and exact
    return ok, f"identity_max={worst:.2e} beta0_exact={exact}"


def check_partition(trials: int = 100) -> tuple[bool, str]:
    torch.manual_seed(303)
    masks = SaliencyMasks(8)
    bad = 0
    with torch.no_grad():
        for _ in range(trials):
            f = torch.randn(2, 8, 9, 11)
            m_ch, m_spa = masks(f)
            p1, p2, p3, p4 = sparsify_parts(f, m_ch, m_spa)
            if not torch.equal((p1 + p2) + (p3 + p4), f):
                bad += 1
    return bad == 0, f"bitwise_failures={bad}/{trials}"


def check_scan(trials: int = 50) -> tuple[bool, str]:
    g = torch.Generator().manual_seed(404)
    worst = 0.0
    for _ in range(trials):
        b = int(torch.randint(1, 3, (1,), generator=g))
        T = int(torch.randint(2, 33, (1,), generator=g))
        d = int(torch.randint(1, 7, (1,), generator=g))
        s = int(torch.randint(1, 9, (1,), generator=g))
        u = torch.randn(b, T, d, generator=g)
        delta = torch.rand(b, T, d, generator=g) * 0.9 + 0.05
        A = -torch.rand(d, s, generator=g) * 2.0
        B = torch.randn(b, T, s, generator=g)
        C = torch.randn(b, T, s, generator=g)
        D = torch.randn(d, generator=g)
        y = selective_scan(u, delta, A, B, C, D)
        ref = scan_oracle(u, delta, A, B, C, D)
        worst = max(worst, float(np.abs(y.numpy() - ref).max()))

    # degenerate: cumsum on integer inputs must be exact
    u_int = torch.randint(-4, 5, (2, 24, 3), generator=g).float()
    ones = torch.ones(2, 24, 1)
    y_cum = selective_scan(u_int, torch.ones_like(u_int),
                           torch.zeros(3, 1), ones, ones, None)
    cum_ok = np.array_equal(y_cum.numpy(),
                            np.cumsum(u_int.numpy(), axis=1))
    # degenerate: skip-only path (C = 0) is bitwise D * u
    u2 = torch.randn(2, 17, 4, generator=g)
    D2 = torch.randn(4, generator=g)
    y_skip = selective_scan(u2, torch.full_like(u2, 0.3), -torch.ones(4, 2),
                            torch.randn(2, 17, 2, generator=g),
                            torch.zeros(2, 17, 2), D2)
    skip_ok = torch.equal(y_skip, D2.view(1, 1, 4) * u2)
    ok = worst < 1e-5 and cum_ok and skip_ok
    return ok, f"max_abs={worst:.2e} cumsum_exact={cum_ok} skip_exact={skip_ok}"


def check_gradients() -> tuple[bool, str]:
    torch.manual_seed(505)
    mdfm = MultiDomainFusion(4).double()
    x_spa = torch.randn(1, 4, 4, 4, dtype=torch.float64, requires_grad=True)
    x_fre = torch.randn(1, 4, 4, 4, dtype=torch.float64, requires_grad=True)
    loss = mdfm(x_spa, x_fre).pow(2).sum()
    loss.backward()
    rng = np.random.default_rng(506)
    worst = 0.0
    for x in (x_spa, x_fre):
        flat = x.detach().view(-1)
        grad = x.grad.view(-1)
        for _ in range(5):
            i = int(rng.integers(flat.numel()))
            eps = 1e-6
            orig = float(flat[i])
            with torch.no_grad():
                flat[i] = orig + eps
                up = float(mdfm(x_spa, x_fre).pow(2).sum())
                flat[i] = orig - eps
                dn = float(mdfm(x_spa, x_fre).pow(2).sum())
                flat[i] = orig
            fd = (up - dn) / (2 * eps)
            ag = float(grad[i])
            worst = max(worst, abs(fd - ag) / max(abs(fd), abs(ag), 1e-3))
    return worst < 1e-4, f"max_rel={worst:.2e}"


def check_deformable(trials: int = 50) -> tuple[bool, str]:
    # float64: integer-tap bilinear weights are exact, so the comparison
    # measures the identity rather than grid rounding noise
    torch.manual_seed(606)
    worst = 0.0
    for _ in range(trials):
        unit = DeformableUnit(5).double()
        x = torch.randn(1, 5, 10, 12, dtype=torch.float64)
        with torch.no_grad():
            y = unit(x)
            ref = F.conv2d(x, unit.weight, unit.bias, padding=1)
        worst = max(worst, float((y - ref).abs().max()))
    return worst < 1e-6, f"max_abs={worst:.2e}"


def check_schedules() -> tuple[bool, str]:
    cfg = TrainConfig()
    ok = True
    for epoch in range(200):
        lr = lr_schedule(epoch, cfg)
        want = 1.2e-4 if epoch < 50 else 1.2e-4 * ((200 - epoch) / 150)
        ok = ok and lr == want
        lam = seg_schedule(epoch, cfg)
        ok = ok and lam == (0.0 if epoch < 50 else 0.5)
    ok = ok and lr_schedule(125, cfg) == 6e-5
    return ok, f"lr(125)={lr_schedule(125, cfg):.6g}"


def check_metrics() -> tuple[bool, str]:
    rng = np.random.default_rng(707)
    x = rng.random((16, 16, 3))
    ok = psnr(x, x, 1.0) == 100.0 and abs(ssim(x, x, 1.0) - 1.0) < 1e-12
    ok = ok and abs(uiqi(x, x) - 1.0) < 1e-9
    y = np.clip(x + 0.1, None, None)
    ok = ok and abs(psnr(x, y, 1.0) - 20.0) < 1e-6
    a = np.full((16, 16), 0.5)
    b = np.full((16, 16), 0.25)
    ok = ok and abs(ssim(a, b, 1.0) - 0.8001) < 1e-3
    return ok, (f"psnr_step={psnr(x, y, 1.0):.8f} "
                f"const_ssim={ssim(a, b, 1.0):.6f}")


SUITES = [
    ("wavelet_roundtrip", check_wavelet),
    ("frequency_identity", check_fem_identity),
    ("mask_partition", check_partition),
    ("selective_scan", check_scan),
    ("gradient_probe", check_gradients),
    ("deformable_identity", check_deformable),
    ("schedules", check_schedules),
    ("metric_closed_forms", check_metrics),
]


def run_all(log=print) -> bool:
    all_ok = True
    for name, fn in SUITES:
        ok, detail = fn()
        all_ok = all_ok and ok
        log(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    log("selftest " + ("PASS" if all_ok else "FAIL"))
    return all_ok
