"""Sawtooth parameter estimators.

PCP
    periodogram peak for the normalized frequency, circular correlation of
    the first estimated period for the phase, least squares for the offset.
LGS
    local grid search on (beta, gamma) around an initial estimate.
GGS
    global grid search on gamma when beta and psi are known.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (GenericParams, Knowns, PhysicalEstimate, Trace,
                    generic_to_physical, mod1, sawtooth_phase)


@dataclass(frozen=True)
class GridConfig:
    beta_halfwidth: float | None = None  # None means 2/N
    beta_points: int = 41
    gamma_halfwidth: float = 0.05
    gamma_points: int = 101
    gamma_points_global: int = 1000

    def __post_init__(self):
        if self.beta_halfwidth is not None and not self.beta_halfwidth > 0:
            raise ValueError("beta_halfwidth must be positive")
        if not self.gamma_halfwidth > 0:
            raise ValueError("gamma_halfwidth must be positive")
        for name in ("beta_points", "gamma_points"):
            v = getattr(self, name)
            if v < 3 or v % 2 == 0:
                raise ValueError(f"{name} must be an odd integer >= 3")
        if self.gamma_points_global < 3:
            raise ValueError("gamma_points_global must be >= 3")


@dataclass(frozen=True)
class EstimationResult:
    theta_hat: GenericParams
    objective: float
    method: str
    physical_hat: PhysicalEstimate | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def rho(self):
        return self.physical_hat.rho if self.physical_hat else None

    @property
    def f_d(self):
        return self.physical_hat.f_d if self.physical_hat else None

    @property
    def phi_S(self):
        return self.physical_hat.phi_S if self.physical_hat else None


_PCP_MIN_WINDOW = 256
_PCP_MIN_LEVELS = 100


def wrap_beta(beta):
    """Alias a normalized frequency into [-1/2, 1/2)."""
    return mod1(beta + 0.5) - 0.5


def ls_offset(t: Trace, psi: float, beta: float, gamma: float) -> float:
    """Least-squares offset for fixed amplitude, frequency and phase."""
    return float(np.mean(t.y - psi * sawtooth_phase(beta, gamma, t.n)))


def _resolve_psi(beta, psi, knowns):
    if psi is not None:
        return psi
    if knowns is None:
        raise ValueError("either psi or clock-sync knowns must be given")
    return knowns.psi_for_beta(beta)


def _finish(t, beta, gamma, psi, knowns, method, diag):
    alpha = ls_offset(t, psi, beta, gamma)
    theta = GenericParams(alpha, psi, float(beta), float(gamma))
    r = t.y - alpha - psi * sawtooth_phase(beta, gamma, t.n)
    phys = generic_to_physical(theta, knowns) if knowns is not None else None
    return EstimationResult(theta, float(np.mean(r * r)), method, phys, diag)


def _correlation_phase(z, beta, levels):
    """Phase maximizing correlation of ``z`` with a unit sawtooth at ``beta``.

    Candidate phases are ``l / levels`` for l = 0..levels-1.
    """
    j = np.arange(len(z))
    lags = np.arange(levels) / levels
    best, best_l = -np.inf, 0
    chunk = max(1, 2**22 // max(len(z), 1))
    for s in range(0, levels, chunk):
        tmpl = mod1(mod1(beta * j)[None, :] + lags[s:s + chunk, None])
        tmpl = tmpl - tmpl.mean(axis=1, keepdims=True)
        c = tmpl @ z
        k = int(np.argmax(c))
        if c[k] > best:
            best, best_l = c[k], s + k
    return best_l / levels


def pcp_estimate(t: Trace, sign_psi: int = -1, knowns: Knowns | None = None,
                 psi: float | None = None) -> EstimationResult:
    """Periodogram and correlation peaks estimate.

    Parameters
    ----------
    t : Trace
        Needs at least 16 samples.
    sign_psi : int
        Known sign of the amplitude (negative for RTT data).
    knowns : Knowns, optional
        Clock-sync mode: the amplitude follows from the frequency estimate
        and physical estimates are attached.
    psi : float, optional
        Generic mode: known amplitude. Takes precedence over ``knowns``.

    Returns
    -------
    EstimationResult
    """
    N = t.N
    if N < 16:
        raise ValueError("PCP needs at least 16 samples")
    if psi is not None and np.sign(psi) != np.sign(sign_psi):
        raise ValueError("psi disagrees with sign_psi")
    y0 = t.y - t.y.mean()
    if np.ptp(t.y) == 0:
        raise ValueError("constant trace: frequency is undetectable")
    power = np.abs(np.fft.rfft(y0)) ** 2
    kmax = N // 2
    k_star = 1 + int(np.argmax(power[1:kmax + 1]))
    b = k_star / N

    # A DFT-bin frequency error of up to 1/(2N) lets the phase drift by half
    # a cycle over the full trace, so phase and sign are judged on a short
    # leading window spanning at least one estimated period.
    candidates = [b] if b >= 0.5 else [b, -b]
    best, best_score = None, np.inf
    for cand in candidates:
        beta = float(wrap_beta(cand))
        ps = _resolve_psi(beta, psi, knowns)
        P = int(min(N, max(2, round(1.0 / abs(beta)))))
        L = int(min(N, max(P, _PCP_MIN_WINDOW)))
        z = np.sign(sign_psi) * y0[:L]
        z = z - z.mean()
        gamma = _correlation_phase(z, beta, max(P, _PCP_MIN_LEVELS))
        m = sawtooth_phase(beta, gamma, t.n[:L])
        r = t.y[:L] - ps * m
        score = float(r.var())
        if score < best_score:
            best_score = score
            best = _finish(t, beta, gamma, ps, knowns, "PCP",
                           {"peak_bin": k_star, "period": P, "window": L})
    return best


def lgs_estimate(t: Trace, init: EstimationResult, grid: GridConfig | None = None,
                 sign_psi: int = -1, knowns: Knowns | None = None,
                 psi: float | None = None) -> EstimationResult:
    """Grid search on (beta, gamma) centred on ``init``.

    The offset is the least-squares value at each node. The result is never
    worse than ``init``.
    """
    grid = grid or GridConfig()
    N = t.N
    th = init.theta_hat
    bw = grid.beta_halfwidth if grid.beta_halfwidth is not None else 2.0 / N
    hb = grid.beta_points // 2
    hg = grid.gamma_points // 2
    dbeta = np.arange(-hb, hb + 1) * (bw / hb)
    dgamma = np.arange(-hg, hg + 1) * (grid.gamma_halfwidth / hg)
    gammas = mod1(th.gamma + dgamma)
    n = t.n.astype(float)
    y = t.y

    best_val, best_idx = np.inf, None
    for i, db in enumerate(dbeta):
        beta = float(wrap_beta(th.beta + db))
        ps = _resolve_psi(beta, psi, knowns)
        if np.sign(ps) != np.sign(sign_psi):
            raise ValueError("psi disagrees with sign_psi")
        m = mod1(mod1(beta * n)[None, :] + gammas[:, None])
        r = y[None, :] - ps * m
        obj = r.var(axis=1)
        j = int(np.argmin(obj))
        if obj[j] < best_val:
            best_val, best_idx = obj[j], (beta, float(gammas[j]), ps)
    beta, gamma, ps = best_idx
    res = _finish(t, beta, gamma, ps, knowns, "LGS",
                  {"beta_points": grid.beta_points,
                   "gamma_points": grid.gamma_points,
                   "beta_halfwidth": bw})
    if res.objective > init.objective:
        return EstimationResult(init.theta_hat, init.objective, "LGS",
                                init.physical_hat, dict(res.diagnostics, kept_init=True))
    return res


def ggs_objective(t: Trace, psi: float, beta: float, G: int) -> np.ndarray:
    """Prediction MSE (offset profiled out) at gamma = k/G, k = 0..G-1."""
    gammas = np.arange(G) / G
    n = t.n.astype(float)
    out = np.empty(G)
    step = max(1, 2**22 // t.N)
    for s in range(0, G, step):
        m = mod1(mod1(beta * n)[None, :] + gammas[s:s + step, None])
        out[s:s + step] = (t.y[None, :] - psi * m).var(axis=1)
    return out


def plateau_center(obj: np.ndarray, rtol: float = 1e-9) -> int:
    """Index at the middle of the circular run of near-minimal values.

    Offset/phase shifts inside the ambiguity region leave the profiled
    objective exactly flat, so among equivalent grid nodes the central
    one is returned. Runs are found circularly, starting from the first
    minimizing index.
    """
    G = obj.size
    lo = obj.min()
    tie = obj <= lo + rtol * max(abs(lo), np.finfo(float).tiny)
    k0 = int(np.argmax(tie))
    if tie.all():
        return k0
    left = 0
    while tie[(k0 - left - 1) % G]:
        left += 1
    right = 0
    while tie[(k0 + right + 1) % G]:
        right += 1
    start = k0 - left
    length = left + right + 1
    return (start + (length - 1) // 2) % G


def ggs_estimate(t: Trace, psi: float, beta: float,
                 gamma_points_global: int = 1000, ties: str = "center"):
    """Global grid search on gamma with known amplitude and frequency.

    ``ties="center"`` picks the middle of a flat run of minimizers,
    ``ties="first"`` the smallest index.

    Returns
    -------
    alpha_hat, gamma_hat : float
    """
    obj = ggs_objective(t, psi, beta, gamma_points_global)
    if ties == "center":
        k = plateau_center(obj)
    elif ties == "first":
        k = int(np.argmin(obj))
    else:
        raise ValueError(f"unknown tie rule {ties!r}")
    gamma = k / gamma_points_global
    return ls_offset(t, psi, beta, gamma), gamma


def phase_error(phi_hat: float, phi_true: float) -> float:
    """Squared phase difference, deliberately not wrapped."""
    return float((phi_hat - phi_true) ** 2)
