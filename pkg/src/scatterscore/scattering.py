"""First- and second-order wavelet scattering of 1-D signals.

Filters live in the frequency domain on the ``np.fft.fftfreq`` grid
(cycles per sample). Convolutions are circular and computed as products
of DFTs; the input is zero-padded far enough that wrap-around only ever
brings in zeros near the signal edges.

Wavelets are Morlet (a Gaussian band-pass minus a scaled Gaussian
low-pass, so that the response at DC is exactly zero). The low-pass
``phi`` is a Gaussian with unit DC gain whose time support is about
``2**J`` samples. Each wavelet bank is scaled once so that the
Littlewood-Paley sum

    |phi(w)|^2 + 1/2 * sum_l (|psi_l(w)|^2 + |psi_l(-w)|^2)

peaks at exactly 1, which makes every layer non-expansive.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .dsp import AudioBuffer
from .errors import InvalidConfig, LengthMismatch

XI_MAX = 0.35
SIGMA0 = 0.1
# |x * psi_l1| keeps its energy below this multiple of sigma(l1); second-order
# wavelets centred above it (or above xi(l1)) are skipped.
ENVELOPE_BANDWIDTH = 3.0 * math.sqrt(2.0)
_PERIODS = 3


@dataclass(frozen=True)
class ScatteringConfig:
    J: int = 8
    Q1: int = 8
    Q2: int = 1
    signal_padding: bool = True

    def __post_init__(self):
        for name in ("J", "Q1", "Q2"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidConfig(f"{name} must be an integer >= 1, got {value!r}")

    @property
    def T(self):
        return 2 ** self.J


@dataclass(frozen=True, eq=False)
class FilterBank:
    psi1: np.ndarray      # (|L1|, N) real frequency responses
    xi1: np.ndarray       # center frequencies, strictly decreasing
    sigma1: np.ndarray
    psi2: np.ndarray
    xi2: np.ndarray
    sigma2: np.ndarray
    phi: np.ndarray       # (N,)
    sigma_phi: float
    pairs: tuple          # retained (l1, l2) index pairs, lexicographic
    signal_length: int
    config: ScatteringConfig

    @property
    def subsampling(self):
        return self.config.T

    @property
    def paths(self):
        order1 = [(l1,) for l1 in range(len(self.xi1))]
        return order1 + list(self.pairs)

    def littlewood_paley(self, order=1):
        psi = self.psi1 if order == 1 else self.psi2
        mirrored = np.roll(psi[:, ::-1], 1, axis=1)  # psi(-w) on the fftfreq grid
        return self.phi ** 2 + 0.5 * ((psi ** 2).sum(0) + (mirrored ** 2).sum(0))


@dataclass(frozen=True, eq=False)
class ScatteringCoeffs:
    values: np.ndarray    # (frames, paths)
    paths: tuple

    @property
    def frames(self):
        return self.values.shape[0]


def morlet_sigma(xi, Q, r=math.sqrt(0.5)):
    """Bandwidth so that neighbouring wavelets, 1/Q octave apart, cross at ``r``."""
    f = 2.0 ** (-1.0 / Q)
    return xi * (1.0 - f) / (1.0 + f) / math.sqrt(2.0 * math.log(1.0 / r))


def wavelet_centers(J, Q):
    """Center frequencies and bandwidths of a bank with Q wavelets per octave.

    Centers descend geometrically from ``XI_MAX`` while the bandwidth stays
    above the low-pass bandwidth; below that, Q - 1 extra wavelets with the
    low-pass bandwidth are spread linearly down towards zero.
    """
    sigma_min = SIGMA0 / 2 ** J
    xis, sigmas = [], []
    xi = XI_MAX
    sigma = morlet_sigma(xi, Q)
    while sigma > sigma_min:
        xis.append(xi)
        sigmas.append(sigma)
        xi /= 2.0 ** (1.0 / Q)
        sigma = morlet_sigma(xi, Q)
    last = xis[-1]
    for q in range(1, Q):
        xis.append(last * (Q - q) / Q)
        sigmas.append(sigma_min)
    return np.array(xis), np.array(sigmas)


def _periodized_gaussian(freqs, center, sigma):
    out = np.zeros_like(freqs)
    for k in range(-_PERIODS, _PERIODS + 1):
        out += np.exp(-((freqs + k - center) ** 2) / (2.0 * sigma ** 2))
    return out


def morlet_fft(N, xi, sigma):
    freqs = np.fft.fftfreq(N)
    gabor = _periodized_gaussian(freqs, xi, sigma)
    low = _periodized_gaussian(freqs, 0.0, sigma)
    psi = gabor - (gabor[0] / low[0]) * low
    psi[0] = 0.0
    return psi


def gaussian_lowpass_fft(N, sigma):
    phi = _periodized_gaussian(np.fft.fftfreq(N), 0.0, sigma)
    return phi / phi[0]


def _normalize_bank(psi, phi):
    mirrored = np.roll(psi[:, ::-1], 1, axis=1)
    lp = 0.5 * ((psi ** 2).sum(0) + (mirrored ** 2).sum(0))
    mask = lp > 1e-12
    scale2 = np.min((1.0 - phi[mask] ** 2) / lp[mask])
    return psi * math.sqrt(scale2)


def build_filterbank(config: ScatteringConfig, signal_length: int) -> FilterBank:
    N = int(signal_length)
    if N < 2 or N & (N - 1):
        raise InvalidConfig(f"signal_length must be a power of two, got {N}")
    if N < 2 ** config.J:
        raise InvalidConfig(f"J={config.J} needs signal_length >= {2 ** config.J}, got {N}")
    return _cached_filterbank(config, N)


@functools.lru_cache(maxsize=16)
def _cached_filterbank(config, N):
    sigma_phi = SIGMA0 / 2 ** config.J
    phi = gaussian_lowpass_fft(N, sigma_phi)
    xi1, sigma1 = wavelet_centers(config.J, config.Q1)
    xi2, sigma2 = wavelet_centers(config.J, config.Q2)
    psi1 = _normalize_bank(np.array([morlet_fft(N, x, s) for x, s in zip(xi1, sigma1)]), phi)
    psi2 = _normalize_bank(np.array([morlet_fft(N, x, s) for x, s in zip(xi2, sigma2)]), phi)
    pairs = tuple(
        (l1, l2)
        for l1 in range(len(xi1))
        for l2 in range(len(xi2))
        if xi2[l2] < min(xi1[l1], ENVELOPE_BANDWIDTH * sigma1[l1])
    )
    for arr in (phi, psi1, psi2, xi1, xi2, sigma1, sigma2):
        arr.setflags(write=False)
    return FilterBank(psi1, xi1, sigma1, psi2, xi2, sigma2, phi, sigma_phi, pairs, N, config)


def _samples(x):
    return x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=np.float64)


def _check_length(x, fb):
    if x.shape[-1] != fb.signal_length:
        raise LengthMismatch(f"signal has {x.shape[-1]} samples, filter bank expects {fb.signal_length}")


def _average(U_hat, fb):
    # Low-pass then keep every 2**J-th sample.
    out = np.fft.ifft(U_hat * fb.phi, axis=-1).real[..., :: fb.subsampling]
    return np.maximum(out, 0.0)


def _first_layer(x, fb):
    X = np.fft.fft(x)
    return np.abs(np.fft.ifft(X[None, :] * fb.psi1, axis=1))


def scatter_order1(x, fb: FilterBank) -> np.ndarray:
    """First-order coefficients, shape (N / 2**J, |L1|)."""
    x = _samples(x)
    _check_length(x, fb)
    U1 = _first_layer(x, fb)
    return _average(np.fft.fft(U1, axis=1), fb).T


def _second_order(U1, fb):
    out = np.empty((len(fb.pairs), fb.signal_length // fb.subsampling))
    row = 0
    by_l1 = {}
    for l1, l2 in fb.pairs:
        by_l1.setdefault(l1, []).append(l2)
    for l1, l2s in by_l1.items():
        U1_hat = np.fft.fft(U1[l1])
        U2 = np.abs(np.fft.ifft(U1_hat[None, :] * fb.psi2[l2s], axis=1))
        out[row:row + len(l2s)] = _average(np.fft.fft(U2, axis=1), fb)
        row += len(l2s)
    return out.T


def scatter_order2(x, fb: FilterBank) -> np.ndarray:
    """Second-order coefficients over ``fb.pairs``, shape (N / 2**J, |pairs|)."""
    x = _samples(x)
    _check_length(x, fb)
    return _second_order(_first_layer(x, fb), fb)


def padded_length(n, config: ScatteringConfig):
    need = n + 2 * config.T if config.signal_padding else n
    return max(1 << (int(need) - 1).bit_length(), config.T)


def scattering_features(x, config: ScatteringConfig = ScatteringConfig()) -> ScatteringCoeffs:
    """Concatenated order-1 and order-2 coefficients of ``x``.

    The signal is zero-padded at the end to a power of two (at least
    ``len + 2 * 2**J`` when padding is on) and the output is trimmed to
    ``ceil(len / 2**J)`` frames, frame t being centred on sample ``t * 2**J``.
    """
    x = _samples(x)
    if x.size == 0:
        raise ValueError("empty signal")
    N = padded_length(x.size, config)
    if not config.signal_padding and N != x.size:
        raise InvalidConfig("signal_padding=False requires a power-of-two length >= 2**J")
    fb = build_filterbank(config, N)
    padded = np.zeros(N)
    padded[: x.size] = x
    U1 = _first_layer(padded, fb)
    s1 = _average(np.fft.fft(U1, axis=1), fb).T
    s2 = _second_order(U1, fb)
    frames = -(-x.size // config.T)
    values = np.concatenate([s1, s2], axis=1)[:frames]
    return ScatteringCoeffs(values, tuple(fb.paths))
