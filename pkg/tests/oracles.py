"""Slow, direct reference implementations used only by the tests."""
import math
from fractions import Fraction

import numpy as np


def circular_convolve(x, h):
    """y[n] = sum_m x[m] h[(n - m) mod N], evaluated as a direct sum."""
    N = x.size
    def real_conv(a, b):
        full = np.convolve(a, b)
        out = full[:N].copy()
        out[: full.size - N] += full[N:]
        return out
    if np.iscomplexobj(h) or np.iscomplexobj(x):
        xr, xi = np.real(x), np.imag(x)
        hr, hi = np.real(h), np.imag(h)
        re = real_conv(xr, hr) - (real_conv(xi, hi) if np.any(xi) else 0.0)
        im = real_conv(xr, hi) + (real_conv(xi, hr) if np.any(xi) else 0.0)
        return re + 1j * im
    return real_conv(x, h)


def time_filters(fb):
    psi1 = np.fft.ifft(fb.psi1, axis=1)
    psi2 = np.fft.ifft(fb.psi2, axis=1)
    phi = np.fft.ifft(fb.phi).real
    return psi1, psi2, phi


def average_subsample(U, phi, step):
    """out[k] = sum_m U[m] phi[(k*step - m) mod N] for k = 0 .. N/step - 1."""
    N = U.size
    n = np.arange(N)
    rows = np.array([phi[(k * step - n) % N] for k in range(N // step)])
    return rows @ U


def scattering_oracle(x, fb):
    """Order-1 (frames x L1) and order-2 (frames x pairs) by direct convolution."""
    psi1, psi2, phi = time_filters(fb)
    step = fb.subsampling
    U1 = [np.abs(circular_convolve(x, h)) for h in psi1]
    s1 = np.array([average_subsample(u, phi, step) for u in U1]).T
    s2 = np.array([
        average_subsample(np.abs(circular_convolve(U1[l1], psi2[l2])), phi, step)
        for l1, l2 in fb.pairs
    ]).T
    return s1, s2


def central_difference(f, x, eps=1e-5):
    """Gradient of scalar ``f`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / denom


def textbook_pearson(x, y):
    """Two-pass covariance / standard deviation formula in exact rationals."""
    xs = [Fraction(v) for v in x]
    ys = [Fraction(v) for v in y]
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    vx = sum((a - mx) ** 2 for a in xs)
    vy = sum((b - my) ** 2 for b in ys)
    return float(cov) / math.sqrt(float(vx) * float(vy))


def counting_ranks(values):
    """Average rank by counting: 1 + #smaller + (#equal - 1) / 2."""
    v = list(values)
    return [1 + sum(w < a for w in v) + (sum(w == a for w in v) - 1) / 2 for a in v]


def normal_equation_fit(x, y, ex=None, ey=None):
    """OLS via the 2x2 normal equations with exact rational accumulation."""
    xs = [Fraction(v) for v in x]
    ys = [Fraction(v) for v in y]
    n = len(xs)
    sx, sy = sum(xs), sum(ys)
    sxx = sum(a * a for a in xs)
    sxy = sum(a * b for a, b in zip(xs, ys))
    det = n * sxx - sx * sx
    slope = (n * sxy - sx * sy) / det
    intercept = (sy - slope * sx) / n
    exs = xs if ex is None else [Fraction(v) for v in ex]
    eys = ys if ey is None else [Fraction(v) for v in ey]
    mean = sum(eys) / len(eys)
    ss_res = sum((b - (slope * a + intercept)) ** 2 for a, b in zip(exs, eys))
    ss_tot = sum((b - mean) ** 2 for b in eys)
    return float(slope), float(intercept), float(1 - ss_res / ss_tot)
