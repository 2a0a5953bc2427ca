"""Discrete-event simulation of the master/slave ping-pong exchange.

The master sends a ping on every K-th upflank of its clock. The slave waits
for its next upflank, counts K0 more cycles and sends the pong back. Both
nodes time-stamp with ideal (or quantized) TDCs.

Without jitter every timestamp is computed in exact rational arithmetic,
so the simulated RTTs are correct to well below 1e-20 s even at absolute
times of ~0.2 s where a float64 ulp is ~3e-17 s.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import TWO_PI, PhysicalParams, Trace, make_rng


@dataclass(frozen=True)
class EventSimConfig:
    """Protocol run description.

    Parameters
    ----------
    params : PhysicalParams
    N : int
        Number of RTT measurements to produce.
    master_jitter, slave_jitter : float
        Std of each clock period (s), independent per cycle.
    fwd_jitter, bwd_jitter : float
        Std of each pulse's propagation delay (s).
    tdc_resolution : float
        Quantization step of both TDCs (s); 0 means ideal.
    seed : int or SeedSequence
    """

    params: PhysicalParams
    N: int
    master_jitter: float = 0.0
    slave_jitter: float = 0.0
    fwd_jitter: float = 0.0
    bwd_jitter: float = 0.0
    tdc_resolution: float = 0.0
    seed: object = 0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        for name in ("master_jitter", "slave_jitter", "fwd_jitter",
                     "bwd_jitter", "tdc_resolution"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        self.params.check_slave_model()

    @property
    def noiseless(self) -> bool:
        return (self.master_jitter == 0 and self.slave_jitter == 0
                and self.fwd_jitter == 0 and self.bwd_jitter == 0)


@dataclass
class EventTrace:
    master_rtts: np.ndarray
    slave_tdc: np.ndarray
    ping_departures: np.ndarray
    ping_arrivals: np.ndarray
    pong_departures: np.ndarray
    pong_arrivals: np.ndarray
    upflank_wait: np.ndarray
    dropped: np.ndarray
    overshoot: bool = False
    config: EventSimConfig | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.master_rtts.size

    def to_trace(self) -> Trace:
        cfg = self.config
        return Trace(y=self.master_rtts, meta={
            "physical": cfg.params if cfg else None,
            "seed": cfg.seed if cfg else None,
            "generator": "event-sim",
            "dropped": int(self.dropped.sum()),
        })

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "ping_departure", "ping_arrival", "pong_departure",
                        "pong_arrival", "rtt", "slave_tdc"])
            for n in range(self.N):
                w.writerow([n] + [repr(float(a[n])) for a in (
                    self.ping_departures, self.ping_arrivals,
                    self.pong_departures, self.pong_arrivals,
                    self.master_rtts, self.slave_tdc)])


def _upflank_index(t, T_S, offset, strict):
    """Smallest k with k*T_S - offset >= t (> t if strict)."""
    u = (t + offset) / T_S
    k = math.ceil(u)
    if isinstance(u, Fraction):
        hit = u == k
    else:
        hit = abs(u - round(u)) <= 4 * np.finfo(float).eps * max(1.0, abs(u))
        if hit:
            k = round(u)
    if hit and strict:
        k += 1
    return k


def slave_next_upflank(t, p: PhysicalParams, strict: bool = False):
    """Time of the slave's first upflank at or after ``t``.

    Upflanks are the instants tau with (tau + T_S*phi_S/2pi) / T_S integer.
    With ``strict`` an upflank coinciding with ``t`` is skipped, so the wait
    lies in (0, T_S] instead of [0, T_S).
    """
    T_S = p.T_S
    offset = T_S * p.phi_S / TWO_PI
    k = _upflank_index(t, T_S, offset, strict)
    tau = k * T_S - offset
    if not isinstance(t, Fraction):
        # never report an upflank before t because of rounding
        tau = max(tau, t) if not strict else tau
    return tau


class _ExactClocks:
    """Jitter-free clocks evaluated in rational arithmetic."""

    def __init__(self, p: PhysicalParams):
        T_M = Fraction(p.T_M)
        self.T_M = T_M
        self.T_S = T_M / (T_M * Fraction(p.f_d) + 1)
        self.T_samp = p.K * T_M
        self.t0 = -T_M * Fraction(p.phi_M / TWO_PI)
        self.slave_offset = self.T_S * Fraction(p.phi_S / TWO_PI)
        self.d_fwd = Fraction(p.delta_fwd)
        self.d_bwd = Fraction(p.delta_bwd)
        self.K0 = p.K0

    def ping(self, n):
        return self.t0 + n * self.T_samp

    def fwd(self):
        return self.d_fwd

    def bwd(self):
        return self.d_bwd

    def upflank_after(self, t):
        k = _upflank_index(t, self.T_S, self.slave_offset, strict=True)
        return k * self.T_S - self.slave_offset

    def respond(self, tau):
        return tau + self.K0 * self.T_S


class _JitterClocks:
    """Random-walk clocks: each period is an independent Gaussian draw."""

    def __init__(self, cfg: EventSimConfig, rng: np.random.Generator):
        p = cfg.params
        self.p = p
        self.rng = rng
        self.sm = cfg.master_jitter
        self.ss = cfg.slave_jitter
        self.sf = cfg.fwd_jitter
        self.sb = cfg.bwd_jitter
        self.T_S = p.T_S
        self.t_ping = -p.T_M * p.phi_M / TWO_PI
        self.n_ping = 0
        self.edge = -self.T_S * p.phi_S / TWO_PI
        self.overshoot = False

    def _walk(self, m):
        if m <= 0:
            return 0.0
        return m * self.T_S + self.ss * math.sqrt(m) * self.rng.standard_normal()

    def ping(self, n):
        while self.n_ping < n:
            K = self.p.K
            self.t_ping += K * self.p.T_M + self.sm * math.sqrt(K) * self.rng.standard_normal()
            self.n_ping += 1
        return self.t_ping

    def fwd(self):
        return self.p.delta_fwd + self.sf * self.rng.standard_normal()

    def bwd(self):
        return self.p.delta_bwd + self.sb * self.rng.standard_normal()

    def upflank_after(self, t):
        gap = (t - self.edge) / self.T_S
        if gap > 0:
            spread = 8.0 * self.ss * math.sqrt(gap) / self.T_S
            m = int(gap - spread) - 2
            self.edge += self._walk(m)
        if self.edge > t:
            self.overshoot = True
        while self.edge <= t:
            self.edge += self._walk(1)
        return self.edge

    def respond(self, tau):
        self.edge = tau + self._walk(self.p.K0)
        return self.edge


def _quantize(x, step):
    if step == 0:
        return x
    return np.round(x / step) * step


def run_protocol(cfg: EventSimConfig) -> EventTrace:
    """Simulate ``cfg.N + 1`` pings and the matching pongs.

    ``slave_tdc[n]`` spans pong departure ``n`` to ping arrival ``n + 1``.
    Exchanges in which the pong would leave after the next ping reaches the
    slave are marked dropped and their measurements set to NaN.
    """
    N = cfg.N
    if cfg.noiseless:
        clk = _ExactClocks(cfg.params)
    else:
        clk = _JitterClocks(cfg, make_rng(cfg.seed))

    pd, pa, qd, qa, wait = [], [], [], [], []
    for n in range(N + 1):
        t = clk.ping(n)
        a = t + clk.fwd()
        tau = clk.upflank_after(a)
        d = clk.respond(tau)
        pd.append(t)
        pa.append(a)
        wait.append(tau - a)
        qd.append(d)
        qa.append(d + clk.bwd())

    if cfg.noiseless:
        rtt = [float(qa[n] - pd[n]) for n in range(N)]
        tdc = [float(pa[n + 1] - qd[n]) for n in range(N)]
        conv = lambda v: np.array([float(x) for x in v[:N]])
    else:
        rtt = [qa[n] - pd[n] for n in range(N)]
        tdc = [pa[n + 1] - qd[n] for n in range(N)]
        conv = lambda v: np.array(v[:N], dtype=float)

    rtt = _quantize(np.array(rtt), cfg.tdc_resolution)
    tdc = _quantize(np.array(tdc), cfg.tdc_resolution)
    dropped = np.array([not (qd[n] < pa[n + 1]) or not (qa[n] > pd[n])
                        for n in range(N)])
    rtt[dropped] = np.nan
    tdc[dropped] = np.nan
    return EventTrace(
        master_rtts=rtt, slave_tdc=tdc,
        ping_departures=conv(pd), ping_arrivals=conv(pa),
        pong_departures=conv(qd), pong_arrivals=conv(qa),
        upflank_wait=conv(wait), dropped=dropped,
        overshoot=getattr(clk, "overshoot", False), config=cfg,
    )
