"""Cramer-Rao bounds for the unwrapped (linearized) RTT model.

Once the modulus is undone, the RTT is a line in n,

    y[n] = alpha_t + beta_t * n + noise,  Var = sigma0^2 + (sigma1 + beta_t*sigma2)^2,

whose noise level depends on the slope. Physical bounds follow from the
gradients of the maps (alpha_t, beta_t) -> f_d, delta_rt, phi_S.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import TWO_PI, NoiseParams, PhysicalParams


@dataclass(frozen=True)
class UnwrappedParams:
    alpha_tilde: float
    beta_tilde: float
    sigma0: float
    sigma1: float
    sigma2: float
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need N >= 2 for a two-parameter Fisher matrix")
        if not self.sigma_sq > 0:
            raise ValueError("total noise variance must be positive")

    @property
    def sigma_sq(self) -> float:
        return self.sigma0**2 + (self.sigma1 + self.beta_tilde * self.sigma2) ** 2

    def with_N(self, N: int) -> "UnwrappedParams":
        return UnwrappedParams(self.alpha_tilde, self.beta_tilde, self.sigma0,
                               self.sigma1, self.sigma2, N)


def map_physical_to_unwrapped(p: PhysicalParams, nz: NoiseParams,
                              N: int) -> UnwrappedParams:
    T_S = p.T_S
    return UnwrappedParams(
        alpha_tilde=p.delta0 + p.delta_rt / 2 + T_S * (1 - p.phi_S / TWO_PI),
        beta_tilde=-T_S * p.T_samp * p.f_d,
        sigma0=nz.sigma_w,
        sigma1=p.T_M * nz.sigma_v,
        sigma2=nz.sigma_v / p.K,
        N=N,
    )


def _slope_term(u: UnwrappedParams) -> float:
    """Extra slope information from the slope-dependent noise level."""
    return 2 * u.sigma2**2 * (u.sigma1 + u.beta_tilde * u.sigma2) ** 2 / u.sigma_sq


def fisher(u: UnwrappedParams) -> np.ndarray:
    N, s2 = u.N, u.sigma_sq
    return (N / s2) * np.array([
        [1.0, (N - 1) / 2],
        [(N - 1) / 2, (N - 1) * (2 * N - 1) / 6 + _slope_term(u)],
    ])


def inverse_fisher(u: UnwrappedParams) -> np.ndarray:
    """Closed-form inverse of ``fisher(u)``."""
    N, s2 = u.N, u.sigma_sq
    c = _slope_term(u)
    scale = (s2 / N) / ((N + 1) / 12 + c / (N - 1))
    return scale * np.array([
        [(2 * N - 1) / 6 + c / (N - 1), -0.5],
        [-0.5, 1.0 / (N - 1)],
    ])


def fisher_numeric(u: UnwrappedParams) -> np.ndarray:
    """Fisher matrix of the Gaussian line model from its mean/covariance derivatives.

    Independent of the closed form: I_ij = dmu_i' C^-1 dmu_j + tr(C^-1 dC_i C^-1 dC_j)/2
    with C = sigma^2(beta_t) * I.
    """
    n = np.arange(u.N, dtype=float)
    s2 = u.sigma_sq
    dmu = np.stack([np.ones_like(n), n])
    ds2 = np.array([0.0, 2 * u.sigma2 * (u.sigma1 + u.beta_tilde * u.sigma2)])
    I = dmu @ dmu.T / s2
    I += 0.5 * u.N * np.outer(ds2, ds2) / s2**2
    return I


def log_likelihood(u: UnwrappedParams, y: np.ndarray) -> float:
    n = np.arange(u.N)
    r = y - u.alpha_tilde - u.beta_tilde * n
    s2 = u.sigma_sq
    return float(-0.5 * u.N * math.log(2 * math.pi * s2) - 0.5 * np.dot(r, r) / s2)


def expected_neg_hessian(u: UnwrappedParams, h: float = 1e-4) -> np.ndarray:
    """Expected negative Hessian of the log-likelihood by central differences.

    The expectation over the data is taken analytically: for Gaussian data
    with true mean m and variance v, E[log L(theta)] depends on theta only
    through (m - mu(theta)) and sigma^2(theta).
    """
    n = np.arange(u.N, dtype=float)
    m_true = u.alpha_tilde + u.beta_tilde * n
    v_true = u.sigma_sq

    def expected_ll(a, b):
        s2 = u.sigma0**2 + (u.sigma1 + b * u.sigma2) ** 2
        r = m_true - a - b * n
        return -0.5 * u.N * math.log(2 * math.pi * s2) - 0.5 * (np.dot(r, r) + u.N * v_true) / s2

    x0 = np.array([u.alpha_tilde, u.beta_tilde])
    steps = h * np.maximum(np.abs(x0), [math.sqrt(v_true), math.sqrt(v_true) / u.N])
    H = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            ei = np.eye(2)[i] * steps[i]
            ej = np.eye(2)[j] * steps[j]
            f = lambda d: expected_ll(*(x0 + d))
            H[i, j] = (f(ei + ej) - f(ei - ej) - f(-ei + ej) + f(-ei - ej)) / (4 * steps[i] * steps[j])
    return -H


# g-functions mapping (alpha_t, beta_t) to physical quantities

def g_fd(alpha_t, beta_t, p: PhysicalParams) -> float:
    return -beta_t / (p.T_M * (p.K * p.T_M + beta_t))


def g_delta_rt(alpha_t, beta_t, p: PhysicalParams) -> float:
    """Round-trip delay given a known slave phase."""
    T_S = p.T_M + beta_t / p.K
    return 2 * (alpha_t - p.delta0 - T_S * (1 - p.phi_S / TWO_PI))


def g_phi_S(alpha_t, beta_t, p: PhysicalParams) -> float:
    """Slave phase given a known round-trip delay."""
    T_S = p.T_M + beta_t / p.K
    return TWO_PI + TWO_PI * (p.delta_rt / 2 + p.delta0 - alpha_t) / T_S


G_FUNCTIONS = {"f_d": g_fd, "delta_rt": g_delta_rt, "phi_S": g_phi_S}


def gradient(which: str, p: PhysicalParams) -> np.ndarray:
    """Analytic gradient of the g-function w.r.t. (alpha_t, beta_t)."""
    T_S, K = p.T_S, p.K
    if which == "f_d":
        return np.array([0.0, -1.0 / (T_S**2 * K)])
    grad_rt = 2.0 * np.array([1.0, (p.phi_S / TWO_PI - 1.0) / K])
    if which == "delta_rt":
        return grad_rt
    if which == "phi_S":
        return (-math.pi / T_S) * grad_rt
    raise ValueError(f"unknown quantity {which!r}")


def crlb_physical(u: UnwrappedParams, p: PhysicalParams, which) -> float:
    """Variance bound for f_d (Hz^2), delta_rt (s^2, phase known) or phi_S
    (rad^2, delay known).

    Round-trip delay and slave phase have proportional gradients, so they
    cannot be bounded jointly; asking for both raises.
    """
    if not isinstance(which, str):
        which = tuple(which)
        if {"delta_rt", "phi_S"} <= set(which):
            raise ValueError("delta_rt and phi_S are not jointly identifiable")
        if len(which) != 1:
            raise ValueError("request one quantity at a time")
        which = which[0]
    gvec = gradient(which, p)
    return float(gvec @ inverse_fisher(u) @ gvec)


def crlb_rho(u: UnwrappedParams, p: PhysicalParams) -> float:
    """Range bound (m^2) from the round-trip bound under symmetric delays."""
    return (p.c / 2) ** 2 * crlb_physical(u, p, "delta_rt")


def crlb_offset_known_line(psi: float, sigma_w: float, sigma_v: float, N: int,
                           target: str = "alpha") -> float:
    """Offset (or phase) bound when the rest of the line is known."""
    if N < 1:
        raise ValueError("N must be at least 1")
    v = (sigma_w**2 + psi**2 * sigma_v**2) / N
    if target == "alpha":
        return v
    if target == "gamma":
        return v / psi**2
    raise ValueError(f"unknown target {target!r}")


def to_db(x):
    return 10.0 * np.log10(x)
