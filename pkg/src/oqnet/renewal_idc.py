"""IDC curves for renewal processes: exact phase-type formulas and
estimation from event timestamps.

The index of dispersion for counts of a stationary point process is
I(t) = Var N(t) / E N(t).  For an equilibrium renewal process with a
phase-type interarrival law the whole curve has a closed form through the
Markovian-arrival-process variance formula, which is what the network
calculus consumes.  Event logs (from the simulator or from files) are
handled with an overlapping-window estimator.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .model import (IdcCurve, PhaseType, ServiceSpec, default_grid,
                    ph_erlang, phase_type_for, DET_SURROGATE_PHASES,
                    UnknownDistributionTag)


class EmptyLog(Exception):
    pass


class EstimationWarning(UserWarning):
    pass


class HorizonTooShort(EstimationWarning):
    pass


# ---------------------------------------------------------------------------
# exact curves for phase-type renewal processes

def _stationary(Q):
    """Stationary probability vector of a generator matrix."""
    n = Q.shape[0]
    A = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    theta, *_ = np.linalg.lstsq(A, b, rcond=None)
    return theta


def idc_phase_type(pt, grid=None):
    """Exact IDC curve of the equilibrium renewal process with PH(alpha, T)
    interarrival times.

    Treats the process as a MAP with D0 = T and D1 = (exit rates) x alpha,
    for which the variance of counts has a closed form in the generator's
    deviation matrix.  One eigendecomposition covers the whole grid; if the
    eigenbasis is badly conditioned, each point falls back to an exponential
    of the generator.

    Returns an IdcCurve whose asymptote is the interarrival scv.
    """
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, float)
    alpha, T = pt.alpha, pt.T
    n = alpha.size
    exit_rates = -T.sum(axis=1)
    D1 = np.outer(exit_rates, alpha)
    Q = T + D1
    theta = _stationary(Q)
    lam = float(theta @ exit_rates)          # fundamental rate = 1/mean
    one_theta = np.outer(np.ones(n), theta)
    M = np.linalg.inv(one_theta - Q) - one_theta      # deviation matrix
    u = theta @ D1                           # row vector
    D1_one = D1 @ np.ones(n)
    v = M @ (M @ D1_one)
    uv = float(u @ v)
    theta_v = float(theta @ v)               # zero up to roundoff
    c2 = 1.0 + (2.0 / lam) * float(u @ (M @ D1_one))

    # u e^{Qt} v over the grid
    vals = np.empty(grid.size)
    use_eig = True
    try:
        w, V = np.linalg.eig(Q)
        if np.linalg.cond(V) > 1e8:
            use_eig = False
    except np.linalg.LinAlgError:
        use_eig = False
    if use_eig:
        coeff = (u @ V) * np.linalg.solve(V, v.astype(complex))
        uEv = (np.exp(np.outer(grid, w)) @ coeff).real
    else:
        uEv = np.array([float(u @ expm(Q * t) @ v) for t in grid])
    vals = c2 + (2.0 / (lam * grid)) * (uEv - lam * theta_v - uv)
    return IdcCurve(grid, vals, c2, 1.0)


def service_phase_type(spec):
    """PhaseType used for a service spec's IDC curve.

    Deterministic services get a high-order Erlang stand-in (the network
    calculus needs a smooth curve; the exact scv 0 still flows through the
    analyzer via the stored scv).
    """
    if spec.dist == "deterministic":
        return ph_erlang(DET_SURROGATE_PHASES, spec.rate)
    if spec.dist == "empirical":
        return None
    return spec.phase_type()


def service_idc(spec, grid=None):
    """IDC curve of the renewal process of successive service times."""
    if spec.dist == "empirical":
        return spec.idc
    return idc_phase_type(service_phase_type(spec), grid)


def arrival_idc(spec, grid=None):
    """IDC curve of an external arrival stream."""
    if spec is None:
        return None
    if spec.dist == "empirical":
        return spec.idc
    if spec.dist == "exponential":
        g = default_grid() if grid is None else np.asarray(grid, float)
        return IdcCurve.constant(1.0, g)
    if spec.dist == "deterministic":
        return idc_phase_type(ph_erlang(DET_SURROGATE_PHASES, spec.rate), grid)
    return idc_phase_type(spec.phase_type(), grid)


# ---------------------------------------------------------------------------
# geometric-sum (feedback-absorbed) service

def geometric_ph(pt, p):
    """Phase type of a geometric(1-p) sum of iid PH(alpha, T) variables.

    Restart the chain with probability p at each absorption:
    T' = T + p * exit x alpha.
    """
    exit_rates = -pt.T.sum(axis=1)
    return PhaseType(pt.alpha.copy(), pt.T + p * np.outer(exit_rates, pt.alpha))


def geometric_service(spec, p):
    """Service spec for the geometric-sum service with restart probability p.

    The mean inflates by 1/(1-p) and the scv contracts toward 1:
    c2' = p + (1-p) c2.  Both identities are exact for any base law.
    """
    if not (0.0 <= p < 1.0):
        raise ValueError("restart probability must be in [0, 1)")
    if p == 0.0:
        return spec
    if spec.dist == "empirical":
        raise UnknownDistributionTag(
            "geometric service modification needs a tagged distribution")
    base = service_phase_type(spec)
    mod = geometric_ph(base, p)
    return ServiceSpec(rate=(1.0 - p) * spec.rate,
                       scv=p + (1.0 - p) * spec.scv,
                       dist="phase-type",
                       params={"alpha": mod.alpha, "T": mod.T})


def idc_geometric_service(spec, p, grid=None):
    """IDC curve of the geometric-sum service process."""
    return service_idc(geometric_service(spec, p), grid)


# ---------------------------------------------------------------------------
# estimation from event timestamps

@dataclass
class EventLog:
    """Sorted event timestamps observed over [0, horizon]."""

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        self.times = np.sort(np.asarray(self.times, dtype=float))
        if self.horizon is None:
            self.horizon = float(self.times[-1]) if self.times.size else 0.0

    def __len__(self):
        return self.times.size

    @classmethod
    def load(cls, fh_or_path, horizon=None):
        """Read one timestamp per line; blank lines and '#' comments skipped."""
        if isinstance(fh_or_path, (str, bytes)) or hasattr(fh_or_path, "__fspath__"):
            with open(fh_or_path) as fh:
                return cls._read(fh, horizon)
        return cls._read(fh_or_path, horizon)

    @classmethod
    def _read(cls, fh, horizon):
        times = []
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                times.append(float(s))
            except ValueError:
                raise EmptyLog(f"line {lineno}: not a timestamp: {s!r}") from None
        if not times:
            raise EmptyLog("no events in log")
        return cls(np.asarray(times), horizon)

    def save(self, fh):
        for t in self.times:
            fh.write(f"{t:.12g}\n")


def idc_from_events(log, grid=None, stride_fraction=0.1, max_windows=1 << 20):
    """Estimate (rate, IdcCurve) from an event log.

    Counts events in overlapping windows of each grid length t, advancing
    the window start by stride_fraction * t (capped at `max_windows`
    windows).  Grid points beyond a tenth of the horizon are dropped with a
    HorizonTooShort warning: there are too few effectively independent
    windows there for the variance estimate to mean anything.
    """
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, float)
    times = log.times
    horizon = float(log.horizon)
    n = times.size
    if n == 0:
        raise EmptyLog("no events in log")
    if n < 10_000:
        warnings.warn(f"only {n} events; IDC estimates will be noisy",
                      EstimationWarning, stacklevel=2)
    rate = n / horizon
    usable = grid <= horizon / 10.0 * (1.0 + 1e-9)
    if not np.all(usable):
        warnings.warn(
            f"time grid reaches {grid[-1]:.3g} but the log only supports "
            f"windows up to {horizon / 10.0:.3g}; truncating",
            HorizonTooShort, stacklevel=2)
    grid = grid[usable]
    if grid.size < 2:
        raise EmptyLog("horizon too short for the requested grid")
    vals = np.empty(grid.size)
    for j, t in enumerate(grid):
        stride = t * stride_fraction
        m = int((horizon - t) / stride) + 1
        if m > max_windows:
            m = max_windows
            stride = (horizon - t) / (m - 1)
        starts = stride * np.arange(m)
        # count in half-open windows (s, s+t]
        counts = (np.searchsorted(times, starts + t, side="right")
                  - np.searchsorted(times, starts, side="right"))
        mean = counts.mean()
        vals[j] = counts.var(ddof=1) / mean if mean > 0 else 1.0
    return rate, IdcCurve(grid, vals, float(vals[-1]), 1.0)
