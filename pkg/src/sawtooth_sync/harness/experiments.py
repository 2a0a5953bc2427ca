"""Monte Carlo experiments and their deterministic reduction to result rows."""
from __future__ import annotations

import csv
import io
import math
import multiprocessing
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..crlb import (crlb_offset_known_line, crlb_physical, crlb_rho,
                    map_physical_to_unwrapped)
from ..estimators import ggs_estimate, lgs_estimate, pcp_estimate, phase_error
from ..eventsim import EventSimConfig, run_protocol
from ..identifiability import ambiguous_pair, distribution_distance, epsilon_plus
from ..model import (GenericParams, Knowns, NoiseParams, PhysicalParams,
                     mean_vector, physical_to_generic, rtt_deterministic,
                     sample_trace)
from .config import ExperimentConfig

CSV_FIELDS = ("experiment", "sweep_name", "sweep_value", "estimator", "metric",
              "value", "value_db", "reps", "seed", "stderr")
DUMP_FIELDS = ("experiment", "sweep_name", "sweep_value", "estimator", "metric",
               "rep", "sq_error")

CLOCK_METRICS = ("mse_rho_m2", "mse_fd_Hz2", "mse_phase_rad2")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sweep_name: str
    sweep_value: object
    estimator: str
    metric: str
    value: float
    reps: int
    seed: int
    stderr: float | None = None

    @property
    def value_db(self) -> float | None:
        if self.value == 0:
            return None
        return 10.0 * math.log10(self.value)

    def as_csv(self) -> list[str]:
        db = self.value_db
        return [self.experiment, self.sweep_name, _fmt(self.sweep_value),
                self.estimator, self.metric, _fmt(self.value),
                "" if db is None else _fmt(db), str(self.reps), str(self.seed),
                "" if self.stderr is None else _fmt(self.stderr)]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def rep_generator(cfg: ExperimentConfig, sweep_idx: int, rep: int) -> np.random.Generator:
    """Counter-based stream addressed by (seed, experiment, sweep point, rep)."""
    key = zlib.crc32(cfg.experiment.encode())
    ss = np.random.SeedSequence([cfg.seed, key, sweep_idx, rep])
    return np.random.Generator(np.random.Philox(ss))


def draw_fd(rng: np.random.Generator, cfg: ExperimentConfig) -> float:
    lo, hi = cfg.fd_range
    while True:
        fd = rng.uniform(lo, hi)
        if abs(fd) >= cfg.fd_min_abs:
            return fd


def parallel_map(fn, tasks, workers: int):
    """Ordered map; results come back in task order for any worker count."""
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        return list(ex.map(fn, tasks, chunksize=chunk))


# --- clock synchronization and ranging studies --------------------------------

def _clock_rep(task):
    cfg, sweep_name, value, idx, rep, with_crlb = task
    rng = rep_generator(cfg, idx, rep)
    rho = rng.uniform(*cfg.rho_range)
    fd = draw_fd(rng, cfg)
    phi = rng.uniform(*cfg.phi_range)
    N, snr_in, snr_out = cfg.N, cfg.snr_in_db, cfg.snr_out_db
    if sweep_name == "f_d":
        fd = value
    elif sweep_name == "phi_S":
        phi = value
    elif sweep_name == "N":
        N = int(value)
    elif sweep_name == "snr_in_db":
        snr_in = value
    elif sweep_name == "snr_out_db":
        snr_out = value
    p = PhysicalParams.symmetric(rho, cfg.T_M, fd, phi, cfg.K, cfg.K0, c=cfg.c)
    g = physical_to_generic(p)
    nz = NoiseParams.from_snr(snr_in, snr_out, g.psi)
    t = sample_trace(g, nz, N, seed=rng)
    kn = Knowns.from_params(p)

    out = {}
    pcp = pcp_estimate(t, -1, knowns=kn)
    fits = {"PCP": pcp}
    if "LGS" in cfg.estimators:
        fits["LGS"] = lgs_estimate(t, pcp, cfg.grid_config, -1, knowns=kn)
    for name in cfg.estimators:
        if name not in fits:
            continue
        r = fits[name]
        out[name] = ((r.rho - p.rho) ** 2, (r.f_d - p.f_d) ** 2,
                     phase_error(r.phi_S, p.phi_S))
    if with_crlb:
        u = map_physical_to_unwrapped(p, nz, N)
        out["CRLB"] = (crlb_rho(u, p), crlb_physical(u, p, "f_d"),
                       crlb_physical(u, p, "phi_S"))
    return out


def _reduce(cfg, points, results, metrics, dump):
    """Average per-rep values in rep order; one row per (point, estimator, metric)."""
    rows = []
    for (sweep_name, value, idx), per_rep in zip(points, results):
        names = list(per_rep[0].keys())
        for est in names:
            arr = np.array([r[est] for r in per_rep], dtype=float)
            for j, metric in enumerate(metrics):
                col = arr[:, j]
                se = float(col.std(ddof=1) / math.sqrt(len(col))) if len(col) > 1 else None
                rows.append(ResultRow(cfg.experiment, sweep_name, value, est, metric,
                                      float(np.mean(col)), len(col), cfg.seed, se))
                if dump is not None:
                    for rep, v in enumerate(col):
                        dump.append((cfg.experiment, sweep_name, _fmt(value), est,
                                     metric, rep, repr(float(v))))
    return rows


def _run_sweeps(cfg, sweeps, rep_fn, metrics, workers, dump, with_crlb=False):
    points, tasks = [], []
    for sweep_name, values in sweeps:
        for value in values:
            idx = len(points)
            points.append((sweep_name, value, idx))
            for rep in range(cfg.reps):
                tasks.append((cfg, sweep_name, value, idx, rep, with_crlb))
    flat = parallel_map(rep_fn, tasks, workers)
    grouped = [flat[i * cfg.reps:(i + 1) * cfg.reps] for i in range(len(points))]
    return _reduce(cfg, points, grouped, metrics, dump)


def run_vs_fd(cfg, workers=1, dump=None):
    return _run_sweeps(cfg, [("f_d", cfg.sweep)], _clock_rep, CLOCK_METRICS, workers, dump)


def run_vs_phase(cfg, workers=1, dump=None):
    return _run_sweeps(cfg, [("phi_S", cfg.sweep)], _clock_rep, CLOCK_METRICS, workers, dump)


def run_vs_N(cfg, workers=1, dump=None):
    return _run_sweeps(cfg, [("N", tuple(int(v) for v in cfg.sweep))], _clock_rep,
                       CLOCK_METRICS, workers, dump, with_crlb=True)


SNR_IN_SWEEP = tuple(float(v) for v in range(0, 41, 5))
SNR_OUT_SWEEP = tuple(float(v) for v in range(0, 31, 5))


def run_vs_snr(cfg, workers=1, dump=None):
    """Two sweeps; the SNR not being swept sits at its maximum."""
    if cfg.sweep is not None:
        snr_in = snr_out = tuple(cfg.sweep)
    else:
        snr_in, snr_out = SNR_IN_SWEEP, SNR_OUT_SWEEP
    rows = _run_sweeps(replace(cfg, snr_out_db=max(snr_out)), [("snr_in_db", snr_in)],
                       _clock_rep, CLOCK_METRICS, workers, dump)
    # distinct sweep indices keep the two sweeps on independent streams
    rows += _run_sweeps(replace(cfg, snr_in_db=max(snr_in)),
                        [("snr_out_db", snr_out)], _clock_rep_offset, CLOCK_METRICS,
                        workers, dump)
    return rows


def _clock_rep_offset(task):
    cfg, name, value, idx, rep, crlb = task
    return _clock_rep((cfg, name, value, idx + 10_000, rep, crlb))


# --- offset/phase ambiguity with coherent sampling ----------------------------

def _plateau_rep(task):
    cfg, _, N, idx, rep, _ = task
    rng = rep_generator(cfg, idx, rep)
    beta = cfg.plateau_M / cfg.plateau_Q
    gamma = rng.uniform()
    theta = GenericParams(0.0, 1.0, beta, gamma)
    nz = NoiseParams.from_snr(math.inf, cfg.snr_out_db, 1.0)
    t = sample_trace(theta, NoiseParams(nz.sigma_w, 0.0), int(N), seed=rng)
    G = cfg.grid_config.gamma_points_global
    a_hat, g_hat = ggs_estimate(t, 1.0, beta, G)
    dg = (g_hat - gamma + 0.5) % 1.0 - 0.5
    return {"GGS": ((a_hat - theta.alpha) ** 2, dg * dg)}


def run_epsilon_plateau(cfg, workers=1, dump=None):
    rows = _run_sweeps(cfg, [("N", tuple(int(v) for v in cfg.sweep))], _plateau_rep,
                       ("mse_alpha", "mse_gamma"), workers, dump)
    sigma_w = 10 ** (-cfg.snr_out_db / 20)
    width = 1.0 / cfg.plateau_Q
    for N in cfg.sweep:
        N = int(N)
        for metric, target in (("mse_alpha", "alpha"), ("mse_gamma", "gamma")):
            rows.append(ResultRow(cfg.experiment, "N", N, "CRLB", metric,
                                  crlb_offset_known_line(1.0, sigma_w, 0.0, N, target),
                                  cfg.reps, cfg.seed))
            rows.append(ResultRow(cfg.experiment, "N", N, "plateau", metric,
                                  width**2 / 12, cfg.reps, cfg.seed))
    return rows


# --- closed form vs event simulation ----------------------------------------

def _closed_form_rep(task):
    cfg, _, _, idx, rep, _ = task
    rng = rep_generator(cfg, idx, rep)
    rho = rng.uniform(*cfg.rho_range)
    fd = draw_fd(rng, cfg)
    phi = rng.uniform(*cfg.phi_range)
    phi_M = 0.0 if rep % 2 == 0 else rng.uniform(0, 2 * math.pi)
    p = PhysicalParams.symmetric(rho, cfg.T_M, fd, phi, cfg.K, cfg.K0,
                                 phi_M=phi_M, c=cfg.c)
    et = run_protocol(EventSimConfig(p, cfg.pings))
    diff = np.max(np.abs(et.master_rtts - rtt_deterministic(p, np.arange(cfg.pings))))
    return {"event-sim": (float(diff), float(diff / p.T_S))}


def run_closed_form_check(cfg, workers=1, dump=None):
    tasks = [(cfg, "draw", rep, 0, rep, False) for rep in range(cfg.reps)]
    res = parallel_map(_closed_form_rep, tasks, workers)
    rows = []
    for rep, r in enumerate(res):
        d, rel = r["event-sim"]
        rows.append(ResultRow(cfg.experiment, "draw", rep, "event-sim",
                              "max_abs_diff_s", d, 1, cfg.seed))
        rows.append(ResultRow(cfg.experiment, "draw", rep, "event-sim",
                              "max_abs_diff_over_T_S", rel, 1, cfg.seed))
    worst = max(r["event-sim"][1] for r in res)
    rows.append(ResultRow(cfg.experiment, "all", cfg.reps, "event-sim",
                          "max_abs_diff_over_T_S", worst, cfg.reps, cfg.seed))
    return rows


# --- identifiability scan -----------------------------------------------------

# Dyadic base point and offsets so that the offset/phase trade is exact in
# floating point along the ambiguous curve.
SCAN_BASE = GenericParams(alpha=0.0, psi=1.0, beta=0.25, gamma=0.125)
SCAN_STEP = 1.0 / 128
SCAN_SAMPLES = 3


def _scan_task(task):
    sv, i, j, half = task
    dg = (j - half) * SCAN_STEP
    da = -(i - half) * SCAN_STEP * SCAN_BASE.psi
    b = SCAN_BASE
    other = GenericParams(b.alpha + da, b.psi, b.beta, (b.gamma + dg) % 1.0)
    nz = NoiseParams(0.1 * abs(b.psi), sv)
    d = distribution_distance(b, other, nz, range(SCAN_SAMPLES))
    return da, dg, d.value, d.mode


def run_identifiability_scan(cfg, workers=1, dump=None):
    half = cfg.scan_points // 2
    ep = epsilon_plus(SCAN_BASE.beta, SCAN_BASE.gamma, SCAN_SAMPLES)
    if half * SCAN_STEP >= min(ep, SCAN_BASE.gamma):
        raise ValueError("scan grid leaves the ambiguity region")
    rows = []
    for sv in cfg.scan_sigma_v:
        tasks = [(float(sv), i, j, half) for i in range(cfg.scan_points)
                 for j in range(cfg.scan_points)]
        res = parallel_map(_scan_task, tasks, workers)
        label = f"sigma_v={sv!r}"
        on_curve, off_curve, off_origin = [], [], []
        for (svv, i, j, _), (da, dg, val, mode) in zip(tasks, res):
            metric = "mean_distance" if mode == "mean" else "l1_distance"
            rows.append(ResultRow(cfg.experiment, "delta_alpha;delta_gamma",
                                  f"{da!r};{dg!r}", label, metric, val, 1, cfg.seed))
            (on_curve if i == j else off_curve).append(val)
            if (i, j) != (half, half):
                off_origin.append(val)
        rows.append(ResultRow(cfg.experiment, "summary", "curve", label,
                              "max_distance_on_ambiguous_curve", max(on_curve), 1, cfg.seed))
        rows.append(ResultRow(cfg.experiment, "summary", "off_curve", label,
                              "min_distance_off_curve", min(off_curve), 1, cfg.seed))
        rows.append(ResultRow(cfg.experiment, "summary", "off_origin", label,
                              "min_distance_off_origin", min(off_origin), 1, cfg.seed))
    return rows


def ambiguous_mean_gap(theta, eps, N):
    """Largest per-sample mean difference of the ambiguous pair, in ulps."""
    t1, t2 = ambiguous_pair(theta, eps, N)
    m1, m2 = mean_vector(t1, N), mean_vector(t2, N)
    ulp = np.spacing(np.maximum(np.abs(m1), np.abs(m2)))
    return float(np.max(np.abs(m1 - m2) / ulp))


RUNNERS = {
    "vs_fd": run_vs_fd,
    "vs_phase": run_vs_phase,
    "vs_N": run_vs_N,
    "vs_snr": run_vs_snr,
    "epsilon_plateau": run_epsilon_plateau,
    "theorem1_check": run_closed_form_check,
    "identifiability_scan": run_identifiability_scan,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1, dump: list | None = None):
    return RUNNERS[cfg.experiment](cfg, workers=workers, dump=dump)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        w.writerow(r.as_csv())
    return buf.getvalue()


def dump_to_csv(dump) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DUMP_FIELDS)
    w.writerows(dump)
    return buf.getvalue()


def verify_dump(result_csv: str, dump_csv: str) -> list[str]:
    """Recompute every MSE from the per-rep dump; return mismatch descriptions."""
    per = defaultdict(list)
    for rec in csv.DictReader(io.StringIO(dump_csv)):
        key = (rec["sweep_name"], rec["sweep_value"], rec["estimator"], rec["metric"])
        per[key].append((int(rec["rep"]), float(rec["sq_error"])))
    problems = []
    for rec in csv.DictReader(io.StringIO(result_csv)):
        key = (rec["sweep_name"], rec["sweep_value"], rec["estimator"], rec["metric"])
        if key not in per:
            continue
        vals = np.array([v for _, v in sorted(per[key])])
        if float(np.mean(vals)) != float(rec["value"]):
            problems.append(f"{key}: dump mean {np.mean(vals)!r} != {rec['value']}")
    return problems


def read_rows(csv_text: str):
    return list(csv.DictReader(io.StringIO(csv_text)))


def _lookup(rows, **kw):
    return [r for r in rows if all(str(r[k]) == str(v) for k, v in kw.items())]


def acceptance_checks(cfg: ExperimentConfig, rows):
    """Pass/fail checks an experiment's output can be held to.

    Returns a list of (name, ok, detail).
    """
    recs = read_rows(rows_to_csv(rows))
    out = []

    def db(r):
        return float(r["value_db"]) if r["value_db"] else -math.inf

    if cfg.experiment == "theorem1_check":
        worst = float(_lookup(recs, sweep_name="all")[0]["value"])
        out.append(("event-sim within 1e-12 T_S", worst <= 1e-12, f"max {worst:.3g} T_S"))
    elif cfg.experiment == "identifiability_scan":
        for sv in cfg.scan_sigma_v:
            label = f"sigma_v={float(sv)!r}"
            curve = float(_lookup(recs, estimator=label,
                                  metric="max_distance_on_ambiguous_curve")[0]["value"])
            off = float(_lookup(recs, estimator=label,
                                metric="min_distance_off_origin")[0]["value"])
            if sv == 0:
                out.append((f"{label} zero on ambiguous curve", curve == 0.0, f"{curve!r}"))
            else:
                out.append((f"{label} positive off origin", off > 0, f"{off!r}"))
    elif cfg.experiment == "epsilon_plateau":
        for r in _lookup(recs, estimator="GGS", metric="mse_alpha"):
            N = int(r["sweep_value"])
            ref = _lookup(recs, estimator="CRLB", metric="mse_alpha", sweep_value=N)[0]
            if N <= 300:
                gap = db(r) - db(ref)
                out.append((f"N={N} alpha within 2 dB of CRLB", abs(gap) <= 2, f"{gap:+.2f} dB"))
        for metric in ("mse_alpha", "mse_gamma"):
            for r in _lookup(recs, estimator="GGS", metric=metric, sweep_value=2000):
                ref = _lookup(recs, estimator="plateau", metric=metric, sweep_value=2000)[0]
                gap = db(r) - db(ref)
                out.append((f"N=2000 {metric} within 3 dB of plateau", abs(gap) <= 3,
                            f"{gap:+.2f} dB"))
    elif cfg.experiment == "vs_N":
        for r in _lookup(recs, estimator="LGS", metric="mse_rho_m2", sweep_value=1000):
            out.append(("rho at N=1000 <= (0.1 cm)^2 + 6 dB", db(r) <= -54, f"{db(r):.2f} dB"))
        for r in _lookup(recs, estimator="LGS", metric="mse_fd_Hz2", sweep_value=2000):
            out.append(("f_d at N=2000 <= (0.1 Hz)^2 + 6 dB", db(r) <= -14, f"{db(r):.2f} dB"))
    elif cfg.experiment == "vs_fd":
        sel = [r for r in _lookup(recs, estimator="LGS", metric="mse_fd_Hz2")
               if abs(float(r["sweep_value"])) >= 50]
        worst = max((db(r) for r in sel), default=-math.inf)
        out.append(("LGS f_d below 1 Hz^2 for |f_d| >= 50", worst <= 0, f"worst {worst:.2f} dB"))
    elif cfg.experiment == "vs_phase":
        sel = [r for r in _lookup(recs, estimator="LGS", metric="mse_phase_rad2")
               if math.pi / 2 <= float(r["sweep_value"]) <= 3 * math.pi / 2]
        worst = max((db(r) for r in sel), default=-math.inf)
        ref = 10 * math.log10((2 * math.pi / 10) ** 2)
        out.append(("LGS mid-range phase below (2pi/10)^2", worst <= ref, f"worst {worst:.2f} dB"))
    return out
