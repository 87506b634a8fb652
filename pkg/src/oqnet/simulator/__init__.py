"""Discrete-event simulator for open networks of FCFS single-server queues.

The inner event loop exists twice: a pure-Python engine and an optional
compiled (Cython) twin.  Both consume the same numeric tables and the
same hand-rolled xoshiro256++ random stream, so their outputs are
bit-identical; the compiled engine is simply faster.  The backend is
chosen per run: a ``SimConfig.backend`` of ``"auto"`` defers to the
``OQNET_SIM_BACKEND`` environment variable and falls back to the fastest
available engine.

`simulate` runs independent replications and reports per-station means
with Student-t 95% confidence half-widths; `estimate_idc` turns logged
departure instants into a windowed variance-to-mean curve.
"""

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.stats

from ._tables import SimTables, compile_tables
from . import _engine_py

try:
    from . import _engine_cy
    _HAVE_COMPILED = True
except ImportError:         # extension not built: pure Python only
    _engine_cy = None
    _HAVE_COMPILED = False

__all__ = ["SimConfig", "SimResult", "simulate", "estimate_idc",
           "departure_idc", "available_backends", "compile_tables",
           "SimTables"]


def available_backends():
    """Engine names usable on this install, fastest first."""
    return ["cython", "python"] if _HAVE_COMPILED else ["python"]


def _resolve_backend(name):
    if name in (None, "auto"):
        name = os.environ.get("OQNET_SIM_BACKEND", "auto")
    if name in (None, "auto", ""):
        return "cython" if _HAVE_COMPILED else "python"
    if name == "cython":
        if not _HAVE_COMPILED:
            raise RuntimeError("compiled simulator engine is not available; "
                               "build the extension or use backend='python'")
        return "cython"
    if name == "python":
        return "python"
    raise ValueError(f"unknown simulator backend {name!r}")


@dataclass
class SimConfig:
    """Run parameters for `simulate`.

    events counts *events* (arrivals plus completions), not customers;
    the first ``warmup_frac`` share of them only warms the state up.
    ``log_departures`` names a station whose departure instants are kept
    for dispersion estimation.  Replication r of seed s draws from a
    stream determined by (s, r) only, independent of the backend.
    """

    events: int = 2_000_000
    warmup_frac: float = 0.2
    replications: int = 10
    seed: int = 12345
    log_departures: int = None
    backend: str = "auto"


@dataclass
class SimResult:
    """Replication-averaged estimates with 95% confidence half-widths.

    Station arrays are indexed by station; ``total_sojourn`` is keyed by
    the entry station of the customers averaged over (NaN for stations
    without external arrivals).  ``per_rep`` maps each metric name to
    its (replications, K) matrix of per-replication means.
    """

    backend: str
    events: int
    replications: int
    wait: np.ndarray
    wait_ci: np.ndarray
    sojourn: np.ndarray
    sojourn_ci: np.ndarray
    queue_length: np.ndarray
    queue_length_ci: np.ndarray
    number_in_system: np.ndarray
    number_in_system_ci: np.ndarray
    workload: np.ndarray
    workload_ci: np.ndarray
    utilization: np.ndarray
    utilization_ci: np.ndarray
    throughput: np.ndarray
    throughput_ci: np.ndarray
    total_sojourn: np.ndarray
    total_sojourn_ci: np.ndarray
    per_rep: dict
    durations: np.ndarray
    depart_times: list = None


_METRICS = ("wait", "sojourn", "queue_length", "number_in_system",
            "workload", "utilization", "throughput", "total_sojourn")


def _ci_half(per_rep):
    """95% Student-t half-width of the replication mean, column-wise."""
    R = per_rep.shape[0]
    if R < 2:
        return np.full(per_rep.shape[1], np.nan)
    tcrit = scipy.stats.t.ppf(0.975, R - 1)
    return tcrit * np.std(per_rep, axis=0, ddof=1) / math.sqrt(R)


def simulate(model, config=None, **overrides):
    """Estimate steady-state performance of ``model`` by simulation.

    Keyword overrides patch individual `SimConfig` fields, e.g.
    ``simulate(m, events=10**5, replications=4, seed=7)``.
    """
    if config is None:
        config = SimConfig()
    if overrides:
        config = replace(config, **overrides)
    model.validate()
    tables = compile_tables(model)
    backend = _resolve_backend(config.backend)
    engine = _engine_cy if backend == "cython" else _engine_py

    n_events = int(config.events)
    if n_events <= 0:
        raise ValueError("events must be positive")
    warmup = int(round(n_events * config.warmup_frac))
    if not 0 <= warmup < n_events:
        raise ValueError("warmup_frac must leave a measurement window")
    log_st = -1 if config.log_departures is None else int(config.log_departures)
    R = int(config.replications)
    if R <= 0:
        raise ValueError("replications must be positive")
    K = tables.K

    per = {name: np.empty((R, K)) for name in _METRICS}
    durations = np.empty(R)
    dep_list = [] if log_st >= 0 else None
    for r in range(R):
        (completed, arrived, entered, wait_sum, soj_sum, area_w, area_q,
         area_x, busy_t, exits, net_soj_sum, duration, dep) = engine.run(
            K, tables.routing_cum, tables.svc_kind, tables.svc_off,
            tables.svc_data, tables.ext_kind, tables.ext_off, tables.ext_data,
            n_events, warmup, int(config.seed), r, log_st)
        with np.errstate(invalid="ignore", divide="ignore"):
            per["wait"][r] = wait_sum / completed
            per["sojourn"][r] = soj_sum / completed
            per["queue_length"][r] = area_q / duration
            per["number_in_system"][r] = area_x / duration
            per["workload"][r] = area_w / duration
            per["utilization"][r] = busy_t / duration
            per["throughput"][r] = completed / duration
            per["total_sojourn"][r] = np.where(
                exits > 0, net_soj_sum / np.maximum(exits, 1.0), np.nan)
        durations[r] = duration
        if dep_list is not None:
            dep_list.append(dep)

    fields = {"backend": backend, "events": n_events, "replications": R,
              "per_rep": per, "durations": durations,
              "depart_times": dep_list}
    for name in _METRICS:
        fields[name] = per[name].mean(axis=0)
        fields[name + "_ci"] = _ci_half(per[name])
    return SimResult(**fields)


def estimate_idc(times, duration, ts):
    """Windowed index of dispersion for counts of one logged point process.

    Splits [0, duration] into contiguous windows of width t and returns
    Var/Mean of the window counts for each t in ``ts`` (NaN where fewer
    than two full windows fit or no points fall inside).
    """
    times = np.sort(np.asarray(times, dtype=float))
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    out = np.full(ts.shape, np.nan)
    for idx, t in enumerate(ts):
        if not t > 0:
            continue
        nwin = int(duration / t)
        if nwin < 2:
            continue
        edges = np.arange(nwin + 1) * t
        counts = np.diff(np.searchsorted(times, edges))
        m = counts.mean()
        if m > 0:
            out[idx] = counts.var(ddof=1) / m
    return out


def departure_idc(result, ts):
    """Average the per-replication dispersion curves of a logged station."""
    if result.depart_times is None:
        raise ValueError("simulation was run without departure logging")
    vals = np.array([estimate_idc(d, result.durations[r], ts)
                     for r, d in enumerate(result.depart_times)])
    with np.errstate(invalid="ignore"):
        return np.nanmean(vals, axis=0)
