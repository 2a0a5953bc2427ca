"""Numerical (un)identifiability tools for the sawtooth model.

Without inner noise, offset and phase shifts within the sampling gap are
indistinguishable. With inner noise the law of the wrapped phase is a wrapped
normal whose tails cross the wrapping point, which separates the two.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .model import GenericParams, NoiseParams, mean_vector, mod1, sawtooth_phase

DEFAULT_GRID = 2**14
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def epsilon_plus(beta: float, gamma: float, N: int) -> float:
    """Gap between 1 and the largest of mod1(beta*n + gamma), n < N."""
    if N < 1:
        raise ValueError("N must be at least 1")
    return float(1.0 - np.max(sawtooth_phase(beta, gamma, np.arange(N))))


def epsilon_plus_limit(M: int, Q: int, gamma: float, sign: int = 1) -> float:
    """Limit of epsilon_plus for coherent sampling beta = sign*M/Q.

    The orbit repeats after Q samples, so the gap never shrinks past N = Q.
    """
    if math.gcd(M, Q) != 1 or not 1 <= M <= Q / 2:
        raise ValueError("need co-prime M, Q with 1 <= M <= Q/2")
    return epsilon_plus(sign * M / Q, gamma, Q)


def ambiguous_pair(theta: GenericParams, eps: float, N: int):
    """Two parameter vectors with identical noise-free means on n < N.

    The first moves the offset by ``psi*eps``, the second moves the phase by
    ``eps``. Requires ``0 <= eps < epsilon_plus(beta, gamma, N)``.
    """
    ep = epsilon_plus(theta.beta, theta.gamma, N)
    if not 0 <= eps < ep:
        raise ValueError(f"eps = {eps} outside [0, epsilon_plus = {ep})")
    a, psi, b, g = theta.as_tuple()
    return (GenericParams(a + psi * eps, psi, b, g),
            GenericParams(a, psi, b, g + eps))


@dataclass(frozen=True)
class WrappedNormal:
    """Normal law wrapped onto [0, 1)."""

    mu: float
    sigma: float
    k_max: int | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.k_max is None:
            object.__setattr__(self, "k_max", int(math.ceil(8 * self.sigma)) + 2)

    def pdf(self, x):
        return wrapped_pdf(self, x)


def wrapped_pdf(w: WrappedNormal, x):
    x = np.asarray(x, dtype=float)
    k = np.arange(-w.k_max, w.k_max + 1)
    z = (x[..., None] - w.mu + k) / w.sigma
    out = np.exp(-0.5 * z * z).sum(axis=-1) / (w.sigma * _SQRT_2PI)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DensityGrid:
    x: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def support(self):
        return float(self.x[0]), float(self.x[-1])

    @property
    def step(self) -> float:
        return float(self.x[1] - self.x[0])

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.x))

    def mean(self) -> float:
        return float(np.trapezoid(self.x * self.values, self.x))

    def mode(self) -> float:
        return float(self.x[np.argmax(self.values)])


def _p_density(theta: GenericParams, sigma_v: float, n, x):
    """Density of alpha + psi*mod1(beta*n + gamma + V) at points x (0 off support)."""
    u = (np.asarray(x, dtype=float) - theta.alpha) / theta.psi
    inside = (u >= 0) & (u <= 1)
    w = WrappedNormal(float(sawtooth_phase(theta.beta, theta.gamma, n)), sigma_v)
    out = np.zeros_like(u)
    out[inside] = wrapped_pdf(w, u[inside]) / abs(theta.psi)
    return out


def p_pdf(theta: GenericParams, sigma_v: float, n: int,
          G: int = DEFAULT_GRID) -> DensityGrid:
    """Density of the noise-free-offset process on its support.

    The grid spans the closed support, whose endpoint values coincide by
    periodicity, so the trapezoid rule integrates it to spectral accuracy.
    """
    if sigma_v <= 0:
        raise ValueError("sigma_v = 0 gives a point mass; compare mean vectors instead")
    lo, hi = sorted((theta.alpha, theta.alpha + theta.psi))
    x = np.linspace(lo, hi, G)
    return DensityGrid(x, _p_density(theta, sigma_v, n, x),
                       {"kind": "P", "n": n, "sigma_v": sigma_v})


def _interval_prob(a, b):
    """Phi(b) - Phi(a) for a <= b, evaluated on the side with less cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    upper = a > 0
    return np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def _y_density(theta: GenericParams, nz: NoiseParams, n, y):
    """Exact density of Y[n] for sigma_v > 0 and sigma_w > 0.

    Integrating the Gaussian of W against each wrapped-normal term gives a
    Gaussian in y times the probability that a Gaussian in the phase variable
    falls in [0, 1].
    """
    a, psi = theta.alpha, theta.psi
    sv, sw = nz.sigma_v, nz.sigma_w
    mu = float(sawtooth_phase(theta.beta, theta.gamma, n))
    K = int(math.ceil(8 * sv)) + 2
    var_y = sw * sw + psi * psi * sv * sv
    s2 = 1.0 / (1.0 / (sv * sv) + psi * psi / (sw * sw))
    s = math.sqrt(s2)
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    for k in range(-K, K + 1):
        c = mu - k
        d = y - a - psi * c
        g = np.exp(-0.5 * d * d / var_y) / math.sqrt(2 * math.pi * var_y)
        m = s2 * (c / (sv * sv) + psi * (y - a) / (sw * sw))
        out += g * _interval_prob(-m / s, (1.0 - m) / s)
    return out


def _y_support(theta, nz):
    lo, hi = sorted((theta.alpha, theta.alpha + theta.psi))
    return lo - 8 * nz.sigma_w, hi + 8 * nz.sigma_w


def y_pdf(theta: GenericParams, nz: NoiseParams, n: int,
          G: int = DEFAULT_GRID) -> DensityGrid:
    """Density of Y[n] on a uniform grid covering its support plus 8 sigma_w."""
    if nz.sigma_v <= 0:
        raise ValueError("sigma_v = 0 gives a Gaussian; compare mean vectors instead")
    if nz.sigma_w == 0:
        return p_pdf(theta, nz.sigma_v, n, G)
    x = np.linspace(*_y_support(theta, nz), G)
    return DensityGrid(x, _y_density(theta, nz, n, x),
                       {"kind": "Y", "n": n, "sigma_v": nz.sigma_v,
                        "sigma_w": nz.sigma_w})


def y_pdf_convolved(theta: GenericParams, nz: NoiseParams, n: int,
                    G: int = 4096) -> DensityGrid:
    """Direct-summation convolution of the P density with the W Gaussian.

    Slow reference used to cross-check the closed form in ``y_pdf``.
    """
    lo, hi = _y_support(theta, nz)
    x = np.linspace(lo, hi, G)
    h = x[1] - x[0]
    fp = _p_density(theta, nz.sigma_v, n, x)
    # trapezoid over the support; the P density has jumps at the edges
    wts = np.full(G, h)
    diff = x[:, None] - x[None, :]
    kern = np.exp(-0.5 * (diff / nz.sigma_w) ** 2) / (nz.sigma_w * _SQRT_2PI)
    return DensityGrid(x, kern @ (fp * wts), {"kind": "Y-conv", "n": n})


@dataclass(frozen=True)
class Distance:
    value: float
    mode: str  # "density" (L1) or "mean" (max abs mean difference)
    per_n: tuple = ()

    @property
    def total_variation(self):
        return self.value / 2 if self.mode == "density" else None


def _density_on(theta, nz, n, x):
    if nz.sigma_w == 0:
        return _p_density(theta, nz.sigma_v, n, x)
    return _y_density(theta, nz, n, x)


def distribution_distance(theta1: GenericParams, theta2: GenericParams,
                          nz: NoiseParams, n_set, G: int = DEFAULT_GRID) -> Distance:
    """Largest per-sample L1 distance between the laws of Y[n] under two vectors.

    With ``sigma_v = 0`` both laws are Gaussian with the same covariance, so
    the maximal absolute mean difference is reported instead.
    """
    n_set = list(n_set)
    if not n_set:
        raise ValueError("n_set must be non-empty")
    if nz.sigma_v == 0:
        d = [abs(float(mean_vector(theta1, 1, n)[0] - mean_vector(theta2, 1, n)[0]))
             for n in n_set]
        return Distance(max(d), "mean", tuple(d))
    lo1, hi1 = _y_support(theta1, nz)
    lo2, hi2 = _y_support(theta2, nz)
    x = np.linspace(min(lo1, lo2), max(hi1, hi2), G)
    per = []
    for n in n_set:
        diff = np.abs(_density_on(theta1, nz, n, x) - _density_on(theta2, nz, n, x))
        per.append(float(np.trapezoid(diff, x)))
    return Distance(max(per), "density", tuple(per))


def write_density_csv(path, theta1, theta2, nz, n, G: int = DEFAULT_GRID):
    lo1, hi1 = _y_support(theta1, nz)
    lo2, hi2 = _y_support(theta2, nz)
    x = np.linspace(min(lo1, lo2), max(hi1, hi2), G)
    f1 = _density_on(theta1, nz, n, x)
    f2 = _density_on(theta2, nz, n, x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "f_theta1", "f_theta2", "absdiff"])
        for row in zip(x, f1, f2, np.abs(f1 - f2)):
            w.writerow([repr(float(v)) for v in row])
