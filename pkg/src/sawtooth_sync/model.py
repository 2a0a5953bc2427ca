"""Parameter types, unit modulus and closed-form RTT signal generation.

All times are seconds stored as float64. Phases are radians, normalized
frequencies and phases of the generic model are in cycles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np

TWO_PI = 2.0 * math.pi
DEFAULT_C = 3e8


def mod1(x):
    """Map ``x`` onto ``[0, 1)`` such that ``x - mod1(x)`` is an integer.

    Works elementwise on arrays. A result that rounds up to exactly 1.0
    (tiny negative inputs) is mapped back to 0.0.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("mod1 requires finite input")
    r = arr - np.floor(arr)
    r = np.where(r >= 1.0, 0.0, r)
    if np.ndim(x) == 0:
        return float(r)
    return r


@dataclass(frozen=True)
class PhysicalParams:
    """Physical quantities of the two-node ping/pong protocol.

    ``f_d`` is the primary frequency parameter (1/T_S - 1/T_M); the slave
    period is derived from it.
    """

    T_M: float
    f_d: float
    phi_S: float
    delta_fwd: float
    delta_bwd: float
    K: int
    K0: int
    phi_M: float = 0.0
    c: float = DEFAULT_C

    def __post_init__(self):
        if not self.T_M > 0:
            raise ValueError("T_M must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be a positive integer")
        if int(self.K0) != self.K0 or self.K0 < 0:
            raise ValueError("K0 must be a non-negative integer")
        if self.delta_fwd < 0 or self.delta_bwd < 0:
            raise ValueError("path delays must be non-negative")
        if not self.c > 0:
            raise ValueError("propagation speed must be positive")
        if not self.T_S > 0:
            raise ValueError("f_d yields a non-positive slave period")
        if abs(self.f_d) * self.T_samp >= 0.5:
            raise ValueError(
                f"|f_d| = {abs(self.f_d)} Hz violates |f_d| < 1/(2 T_samp) = "
                f"{0.5 / self.T_samp} Hz"
            )

    @classmethod
    def symmetric(cls, rho: float, T_M: float, f_d: float, phi_S: float,
                  K: int, K0: int, phi_M: float = 0.0,
                  c: float = DEFAULT_C) -> "PhysicalParams":
        """Build parameters with equal forward/backward delay ``rho / c``."""
        d = rho / c
        return cls(T_M=T_M, f_d=f_d, phi_S=phi_S, delta_fwd=d, delta_bwd=d,
                   K=K, K0=K0, phi_M=phi_M, c=c)

    @property
    def T_S(self) -> float:
        return self.T_M / (self.T_M * self.f_d + 1.0)

    @property
    def T_samp(self) -> float:
        return self.K * self.T_M

    @property
    def delta0(self) -> float:
        return self.K0 * self.T_S

    @property
    def delta_rt(self) -> float:
        return self.delta_fwd + self.delta_bwd

    @property
    def rho(self) -> float:
        return self.c * self.delta_fwd

    @property
    def phase_cycles(self) -> float:
        """Slave phase term inside the modulus, including the master phase."""
        return (self.phi_S - (self.T_M / self.T_S) * self.phi_M) / TWO_PI

    def check_slave_model(self):
        if not self.K > self.K0 + 1:
            raise ValueError("slave-side TDC model requires K > K0 + 1")


@dataclass(frozen=True)
class GenericParams:
    """Sawtooth quadruple: offset, amplitude, normalized frequency and phase."""

    alpha: float
    psi: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not abs(self.psi) > 0:
            raise ValueError("psi must be non-zero")
        if not -0.5 <= self.beta < 0.5:
            raise ValueError(f"beta = {self.beta} outside [-1/2, 1/2)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma = {self.gamma} outside [0, 1)")

    def as_tuple(self):
        return (self.alpha, self.psi, self.beta, self.gamma)


@dataclass(frozen=True)
class NoiseParams:
    sigma_w: float = 0.0
    sigma_v: float = 0.0

    def __post_init__(self):
        if self.sigma_w < 0 or self.sigma_v < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @classmethod
    def from_snr(cls, snr_in_db: float, snr_out_db: float,
                 psi: float) -> "NoiseParams":
        """Noise levels from SNR_in = 1/sigma_v^2 and SNR_out = psi^2/sigma_w^2."""
        return cls(sigma_w=abs(psi) * 10.0 ** (-snr_out_db / 20.0),
                   sigma_v=10.0 ** (-snr_in_db / 20.0))

    @property
    def snr_in_db(self) -> float:
        return -20.0 * math.log10(self.sigma_v) if self.sigma_v > 0 else math.inf

    def snr_out_db(self, psi: float) -> float:
        if self.sigma_w == 0:
            return math.inf
        return 20.0 * math.log10(abs(psi) / self.sigma_w)


@dataclass(frozen=True)
class Trace:
    """One realization of RTT measurements with its provenance."""

    y: np.ndarray
    meta: dict[str, Any]
    n0: int = 0

    def __post_init__(self):
        y = np.array(self.y, dtype=float)
        if y.ndim != 1 or y.size < 1:
            raise ValueError("a trace needs at least one sample")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        if self.meta is None:
            raise ValueError("trace metadata is mandatory")

    @property
    def N(self) -> int:
        return self.y.size

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.n0, self.n0 + self.N)

    def shifted(self, d: float) -> "Trace":
        return replace(self, y=self.y + d)


@dataclass(frozen=True)
class Knowns:
    """Quantities the master knows when mapping generic to physical estimates.

    The slave response delay is ``K0`` slave cycles unless ``delta0`` pins it
    to a fixed value.
    """

    T_M: float
    T_samp: float
    K0: int = 0
    delta0: float | None = None
    c: float = DEFAULT_C
    delta1: float = 0.0
    phi_M: float = 0.0

    @classmethod
    def from_params(cls, p: PhysicalParams) -> "Knowns":
        return cls(T_M=p.T_M, T_samp=p.T_samp, K0=p.K0, c=p.c, phi_M=p.phi_M)

    @property
    def K(self) -> int:
        return int(round(self.T_samp / self.T_M))

    def slave_period(self, f_d: float) -> float:
        return self.T_M / (self.T_M * f_d + 1.0)

    def response_delay(self, f_d: float) -> float:
        if self.delta0 is not None:
            return self.delta0
        return self.K0 * self.slave_period(f_d)

    def psi_for_beta(self, beta: float) -> float:
        """Amplitude tied to the normalized frequency, psi = -T_S."""
        return -self.slave_period(beta / self.T_samp)


@dataclass(frozen=True)
class PhysicalEstimate:
    """Physical quantities recovered from a generic parameter vector."""

    f_d: float
    T_S: float
    delta_rt: float
    delta_fwd: float
    delta_bwd: float
    phi_S: float
    rho: float
    feasible: bool

    def to_params(self, knowns: Knowns) -> PhysicalParams:
        if not self.feasible:
            raise ValueError("infeasible estimate (negative round-trip delay)")
        return PhysicalParams(T_M=knowns.T_M, f_d=self.f_d, phi_S=self.phi_S,
                              delta_fwd=self.delta_fwd, delta_bwd=self.delta_bwd,
                              K=knowns.K, K0=knowns.K0, phi_M=knowns.phi_M,
                              c=knowns.c)


def physical_to_generic(p: PhysicalParams) -> GenericParams:
    T_S = p.T_S
    return GenericParams(
        alpha=p.delta0 + p.delta_rt + T_S,
        psi=-T_S,
        beta=p.f_d * p.T_samp,
        gamma=mod1(p.delta_fwd / T_S + p.phase_cycles),
    )


def generic_to_physical(g: GenericParams, knowns: Knowns) -> PhysicalEstimate:
    """Invert the parameter relations under equal forward/backward delays.

    Only ``alpha`` and ``beta`` (with ``gamma`` for the phase) are used; the
    amplitude is implied by ``beta`` through the slave period.
    """
    f_d = g.beta / knowns.T_samp
    T_S = knowns.slave_period(f_d)
    delta_rt = g.alpha - knowns.response_delay(f_d) - T_S
    delta_fwd = delta_rt / 2.0
    master_term = (knowns.T_M / T_S) * knowns.phi_M / TWO_PI
    phi_S = TWO_PI * mod1(g.gamma - mod1(delta_fwd / T_S) + master_term)
    if phi_S >= TWO_PI:
        phi_S = 0.0
    return PhysicalEstimate(
        f_d=f_d, T_S=T_S, delta_rt=delta_rt, delta_fwd=delta_fwd,
        delta_bwd=delta_fwd, phi_S=phi_S,
        rho=knowns.c * (delta_fwd - knowns.delta1),
        feasible=bool(delta_rt >= 0),
    )


def _sawtooth_h(p: PhysicalParams, n) -> np.ndarray:
    n = np.asarray(n)
    return 1.0 - mod1(p.T_samp * p.f_d * n + p.delta_fwd / p.T_S + p.phase_cycles)


def rtt_deterministic(p: PhysicalParams, n):
    """Noise-free RTT measured by the master for ping(s) ``n``."""
    y = p.delta_rt + p.delta0 + p.T_S * _sawtooth_h(p, n)
    return float(y) if np.ndim(y) == 0 else y


def tdc_slave_deterministic(p: PhysicalParams, n):
    """Noise-free interval from pong departure to next ping arrival at the slave."""
    p.check_slave_model()
    x = p.T_samp - p.delta0 - p.T_S * _sawtooth_h(p, n)
    return float(x) if np.ndim(x) == 0 else x


def sawtooth_phase(beta, gamma, n):
    """mod1(beta*n + gamma), reducing beta*n first so gamma keeps full precision."""
    return mod1(mod1(beta * np.asarray(n, dtype=float)) + gamma)


def mean_vector(g: GenericParams, N: int, n0: int = 0) -> np.ndarray:
    n = np.arange(n0, n0 + N)
    return g.alpha + g.psi * sawtooth_phase(g.beta, g.gamma, n)


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; ``seed`` may be an int or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def sample_trace(g: GenericParams, nz: NoiseParams, N: int, seed=0,
                 n0: int = 0, meta: dict | None = None) -> Trace:
    """Draw Y[n] = alpha + W[n] + psi * mod1(beta n + gamma + V[n]).

    Sample ``n`` consumes the ``n``-th pair of normal draws, so prefixes of a
    longer trace agree with shorter traces from the same seed.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    n = np.arange(n0, n0 + N)
    if nz.sigma_w == 0 and nz.sigma_v == 0:
        y = mean_vector(g, N, n0)
    else:
        z = make_rng(seed).standard_normal((N, 2))
        w = nz.sigma_w * z[:, 0]
        v = nz.sigma_v * z[:, 1]
        y = g.alpha + w + g.psi * mod1(mod1(g.beta * n) + g.gamma + v)
    info = {"generic": g, "noise": nz, "seed": _seed_repr(seed),
            "generator": "closed-form"}
    if meta:
        info.update(meta)
    return Trace(y=y, meta=info, n0=n0)


def sample_trace_physical(p: PhysicalParams, nz: NoiseParams, N: int,
                          seed=0) -> Trace:
    return sample_trace(physical_to_generic(p), nz, N, seed=seed,
                        meta={"physical": p})


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return list(np.atleast_1d(seed.entropy)) + list(seed.spawn_key)
    if isinstance(seed, np.random.Generator):
        return "generator"
    return seed


def prediction_mse(t: Trace, g: GenericParams) -> float:
    """Mean squared residual of the trace against the noise-free model at ``g``."""
    r = t.y - mean_vector(g, t.N, t.n0)
    return float(np.mean(r * r))
