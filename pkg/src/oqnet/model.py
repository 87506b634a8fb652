"""Network model: stations, distributions, IDC curves, JSON spec files.

The model layer owns the data types shared by the analyzer and the
simulator: phase-type distribution fits, the index-of-dispersion curve
container, and the network description (service/arrival specs plus a
Markovian routing matrix).  Everything downstream consumes these types.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------------------
# errors

class ModelError(Exception):
    """Base class for model construction/validation problems."""


class RowSumExceedsOne(ModelError):
    pass


class NotInvertible(ModelError):
    pass


class NoExternalArrivals(ModelError):
    pass


class NonpositiveServiceRate(ModelError):
    pass


class ParseError(ModelError):
    """Raised on malformed spec files; message carries line/field context."""


class UnknownDistributionTag(ModelError):
    pass


# Number of Erlang phases used as a stand-in when a closed-form IDC curve is
# needed for a deterministic distribution (scv 1/64 ~ 0.016).
DET_SURROGATE_PHASES = 64


# ---------------------------------------------------------------------------
# time grids

def log_grid(t_min=1e-3, t_max=1e7, points_per_decade=25):
    """Logarithmically spaced time grid, inclusive of both endpoints."""
    if not (t_min > 0 and t_max > t_min):
        raise ValueError("need 0 < t_min < t_max")
    n = int(round(points_per_decade * math.log10(t_max / t_min))) + 1
    return np.logspace(math.log10(t_min), math.log10(t_max), n)


def default_grid():
    return log_grid()


# ---------------------------------------------------------------------------
# IDC curves

@dataclass
class IdcCurve:
    """Index of dispersion for counts, tabulated on a time grid.

    Parameters
    ----------
    grid : array
        Strictly increasing positive time points.
    values : array
        IDC values at the grid points.
    asymptote : float
        Limit as t -> infinity (the variability parameter c^2).
    value_at_zero : float
        Limit as t -> 0+ (1 for any simple point process).
    """

    grid: np.ndarray
    values: np.ndarray
    asymptote: float
    value_at_zero: float = 1.0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.ndim != 1 or self.grid.shape != self.values.shape:
            raise ValueError("grid/values must be 1-d arrays of equal length")
        if self.grid.size < 2:
            raise ValueError("need at least two grid points")
        if np.any(self.grid <= 0) or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be positive and strictly increasing")

    @classmethod
    def constant(cls, value, grid=None):
        """A flat curve (e.g. Poisson: IDC == 1)."""
        g = default_grid() if grid is None else np.asarray(grid, float)
        return cls(g, np.full(g.shape, float(value)), float(value), float(value))

    def evaluate(self, t):
        """Evaluate at times t.

        Below the grid the zero-time limit is used, beyond it the asymptote;
        in between, interpolation is linear in log t.
        """
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("negative time")
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty(t.shape)
        lo = t < self.grid[0]
        hi = t > self.grid[-1]
        mid = ~(lo | hi)
        out[lo] = self.value_at_zero
        out[hi] = self.asymptote
        if np.any(mid):
            out[mid] = np.interp(np.log(t[mid]), np.log(self.grid), self.values)
        return out[0] if scalar else out

    __call__ = evaluate

    def time_scale(self, factor):
        """Curve g with g(t) = f(factor * t).  Exact, no re-interpolation."""
        if factor <= 0:
            raise ValueError("factor must be positive")
        return IdcCurve(self.grid / factor, self.values.copy(),
                        self.asymptote, self.value_at_zero)

    def write_csv(self, fh):
        fh.write("t,idc\n")
        for t, v in zip(self.grid, self.values):
            fh.write(f"{t:.10g},{v:.10g}\n")

    def to_dict(self):
        return {"grid": self.grid.tolist(), "values": self.values.tolist(),
                "asymptote": float(self.asymptote),
                "value_at_zero": float(self.value_at_zero)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["grid"], float), np.asarray(d["values"], float),
                   float(d["asymptote"]), float(d.get("value_at_zero", 1.0)))


# ---------------------------------------------------------------------------
# phase-type distributions

@dataclass
class PhaseType:
    """Absorbing-chain representation (alpha, T) of a nonnegative variable."""

    alpha: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.T = np.asarray(self.T, dtype=float)
        n = self.alpha.size
        if self.T.shape != (n, n):
            raise ValueError("alpha/T size mismatch")

    @property
    def exit_rates(self):
        return -self.T.sum(axis=1)

    def moment(self, k):
        """k-th raw moment: k! * alpha (-T)^{-k} 1."""
        n = self.alpha.size
        v = np.ones(n)
        out = 1.0
        for j in range(1, k + 1):
            v = np.linalg.solve(-self.T, v)
            out *= j
        return out * float(self.alpha @ v)

    def mean(self):
        return self.moment(1)

    def scv(self):
        m1 = self.moment(1)
        return self.moment(2) / m1**2 - 1.0


def ph_exponential(rate):
    return PhaseType([1.0], [[-rate]])


def ph_erlang(k, rate):
    """Erlang-k with overall rate `rate` (mean k / (k*rate) = 1/rate)."""
    nu = k * rate
    T = np.diag(np.full(k, -nu)) + np.diag(np.full(k - 1, nu), 1)
    alpha = np.zeros(k)
    alpha[0] = 1.0
    return PhaseType(alpha, T)


def ph_hyperexp2(p1, mu1, mu2):
    return PhaseType([p1, 1.0 - p1], [[-mu1, 0.0], [0.0, -mu2]])


def ph_mixed_erlang(k, q, nu):
    """Mixture E_{k-1} (prob q) / E_k (prob 1-q), common phase rate nu.

    Represented as a k-phase chain entered at phase 2 with probability q.
    """
    T = np.diag(np.full(k, -nu)) + np.diag(np.full(k - 1, nu), 1)
    alpha = np.zeros(k)
    alpha[0] = 1.0 - q
    if k > 1:
        alpha[1] = q
    return PhaseType(alpha, T)


def fit_hyperexp2(mean, scv):
    """Balanced-means two-phase hyperexponential for scv > 1."""
    if scv <= 1.0:
        raise ValueError("hyperexponential fit needs scv > 1")
    p1 = 0.5 * (1.0 + math.sqrt((scv - 1.0) / (scv + 1.0)))
    mu1 = 2.0 * p1 / mean
    mu2 = 2.0 * (1.0 - p1) / mean
    return p1, mu1, mu2


def fit_mixed_erlang(mean, scv):
    """E_{k-1}/E_k mixture matching (mean, scv) for 0 < scv <= 1."""
    if not (0.0 < scv <= 1.0):
        raise ValueError("mixed-Erlang fit needs 0 < scv <= 1")
    k = max(2, math.ceil(1.0 / scv))
    # guard roundoff when 1/scv is an integer
    if abs(1.0 / scv - round(1.0 / scv)) < 1e-12:
        k = int(round(1.0 / scv))
        if k == 1:
            return 1, 0.0, 1.0 / mean
    disc = k * (1.0 + scv) - k * k * scv
    q = (k * scv - math.sqrt(max(disc, 0.0))) / (1.0 + scv)
    q = min(max(q, 0.0), 1.0)
    nu = (k - q) / mean
    return k, q, nu


# ---------------------------------------------------------------------------
# distribution specs

_SERVICE_ALIASES = {"m": "exponential", "exp": "exponential",
                    "poisson": "exponential", "d": "deterministic",
                    "det": "deterministic", "h2": "hyperexp2"}

KNOWN_DISTS = ("exponential", "erlang", "hyperexp2", "mixed-erlang",
               "deterministic", "phase-type", "empirical")


def fit_distribution(rate, scv):
    """Pick a renewal distribution for a given rate and scv.

    Erlang family below scv 1, exponential at 1, balanced-means H2 above;
    scv 0 is deterministic.
    """
    mean = 1.0 / rate
    if scv < 0:
        raise ValueError("negative scv")
    if scv == 0.0:
        return "deterministic", {"value": mean}
    if scv == 1.0:
        return "exponential", {"rate": rate}
    if scv < 1.0:
        inv = 1.0 / scv
        if abs(inv - round(inv)) < 1e-9:
            return "erlang", {"k": int(round(inv)), "rate": rate}
        k, q, nu = fit_mixed_erlang(mean, scv)
        return "mixed-erlang", {"k": k, "q": q, "nu": nu}
    p1, mu1, mu2 = fit_hyperexp2(mean, scv)
    return "hyperexp2", {"p1": p1, "mu1": mu1, "mu2": mu2}


def phase_type_for(dist, params):
    """PhaseType for a tagged distribution, or None when there isn't one
    (deterministic, empirical)."""
    if dist == "exponential":
        return ph_exponential(params["rate"])
    if dist == "erlang":
        return ph_erlang(int(params["k"]), params["rate"])
    if dist == "hyperexp2":
        return ph_hyperexp2(params["p1"], params["mu1"], params["mu2"])
    if dist == "mixed-erlang":
        return ph_mixed_erlang(int(params["k"]), params["q"], params["nu"])
    if dist == "phase-type":
        return PhaseType(np.asarray(params["alpha"], float),
                         np.asarray(params["T"], float))
    if dist in ("deterministic", "empirical"):
        return None
    raise UnknownDistributionTag(dist)


def _dist_moments(dist, params):
    """(mean, scv) implied by a tagged distribution."""
    if dist == "deterministic":
        return params["value"], 0.0
    if dist == "empirical":
        return None, None
    pt = phase_type_for(dist, params)
    return pt.mean(), pt.scv()


@dataclass
class ServiceSpec:
    """Single-server service description: rate, scv, distribution tag."""

    rate: float
    scv: float
    dist: str
    params: dict = field(default_factory=dict)
    idc: IdcCurve = None   # only for dist == "empirical"

    @classmethod
    def from_rate_scv(cls, rate, scv):
        dist, params = fit_distribution(rate, scv)
        return cls(rate, scv, dist, params)

    def phase_type(self):
        return phase_type_for(self.dist, self.params)


@dataclass
class ArrivalSpec:
    """External arrival stream description."""

    rate: float
    scv: float
    dist: str
    params: dict = field(default_factory=dict)
    idc: IdcCurve = None

    @classmethod
    def poisson(cls, rate):
        return cls(rate, 1.0, "exponential", {"rate": rate})

    @classmethod
    def from_rate_scv(cls, rate, scv):
        dist, params = fit_distribution(rate, scv)
        return cls(rate, scv, dist, params)

    def phase_type(self):
        return phase_type_for(self.dist, self.params)


@dataclass
class Station:
    service: ServiceSpec
    arrival: ArrivalSpec = None     # None: no external arrivals here


class NetworkModel:
    """Open network of single-server FCFS stations with Markovian routing.

    Parameters
    ----------
    stations : list of Station
    routing : (K, K) array
        routing[i][j] is the probability a customer finishing service at
        station i moves to station j; row deficits are exit probabilities.
    """

    def __init__(self, stations, routing):
        self.stations = list(stations)
        self.routing = np.asarray(routing, dtype=float)
        K = len(self.stations)
        if self.routing.shape != (K, K):
            raise ValueError(f"routing must be {K}x{K}")

    @property
    def K(self):
        return len(self.stations)

    def external_rates(self):
        return np.array([s.arrival.rate if s.arrival else 0.0
                         for s in self.stations])

    def service_rates(self):
        return np.array([s.service.rate for s in self.stations])

    def service_scvs(self):
        return np.array([s.service.scv for s in self.stations])

    def validate(self):
        """Check structural sanity; raises a ModelError subclass on failure."""
        P = self.routing
        if np.any(P < -1e-12):
            raise ParseError("negative routing probability")
        sums = P.sum(axis=1)
        bad = np.nonzero(sums > 1.0 + 1e-9)[0]
        if bad.size:
            raise RowSumExceedsOne(
                f"routing row {bad[0]} sums to {sums[bad[0]]:.12g}")
        for i, s in enumerate(self.stations):
            if not (s.service.rate > 0):
                raise NonpositiveServiceRate(f"station {i}")
        lam0 = self.external_rates()
        if np.any(lam0 < 0):
            raise ParseError("negative external arrival rate")
        if lam0.sum() <= 0:
            raise NoExternalArrivals("no station has external arrivals")
        A = np.eye(self.K) - P.T
        try:
            lam = np.linalg.solve(A, lam0)
        except np.linalg.LinAlgError:
            raise NotInvertible("I - P' is singular") from None
        if not np.all(np.isfinite(lam)) or \
                np.linalg.norm(A @ lam - lam0) > 1e-6 * max(1.0, lam0.sum()):
            raise NotInvertible("I - P' is numerically singular")
        return self

    # -- JSON spec files ---------------------------------------------------

    def to_dict(self):
        out = {"stations": [], "routing": self.routing.tolist()}
        for s in self.stations:
            d = {"service": _spec_to_dict(s.service)}
            if s.arrival is not None:
                d["arrival"] = _spec_to_dict(s.arrival)
            out["stations"].append(d)
        return out

    def dump(self, fh, indent=2):
        json.dump(self.to_dict(), fh, indent=indent)
        fh.write("\n")

    @classmethod
    def from_dict(cls, d):
        return _model_from_dict(d)

    @classmethod
    def load(cls, fh_or_path):
        if isinstance(fh_or_path, (str, bytes)) or hasattr(fh_or_path, "__fspath__"):
            with open(fh_or_path) as fh:
                text = fh.read()
        else:
            text = fh_or_path.read()
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"invalid JSON at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}") from None
        return _model_from_dict(d)


def _spec_to_dict(spec):
    d = {"dist": spec.dist, "params": _jsonable(spec.params),
         "rate": float(spec.rate), "scv": float(spec.scv)}
    if spec.idc is not None:
        d["idc"] = spec.idc.to_dict()
    return d


def _jsonable(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, np.ndarray):
            out[k] = v.tolist()
        elif isinstance(v, (np.floating, np.integer)):
            out[k] = v.item()
        else:
            out[k] = v
    return out


def _parse_spec(d, field_path, kind):
    """Build a Service/ArrivalSpec from one JSON object."""
    cls = ServiceSpec if kind == "service" else ArrivalSpec
    if not isinstance(d, dict):
        raise ParseError(f"{field_path}: expected an object")
    dist = d.get("dist")
    if dist is not None:
        dist = _SERVICE_ALIASES.get(str(dist).lower(), str(dist).lower())
        if dist not in KNOWN_DISTS:
            raise ParseError(f"{field_path}.dist: unknown tag {dist!r}")
        params = d.get("params", {})
        if dist == "empirical":
            idc_d = d.get("idc", params.get("idc"))
            if idc_d is None:
                raise ParseError(f"{field_path}: empirical spec needs an idc")
            idc = IdcCurve.from_dict(idc_d)
            rate = d.get("rate", params.get("rate"))
            if rate is None:
                raise ParseError(f"{field_path}: empirical spec needs a rate")
            scv = d.get("scv", params.get("scv", idc.asymptote))
            return cls(float(rate), float(scv), "empirical", {}, idc)
        try:
            mean, scv = _dist_moments(dist, params)
        except KeyError as exc:
            raise ParseError(
                f"{field_path}.params: missing {exc.args[0]!r}") from None
        rate = d.get("rate", 1.0 / mean)
        if abs(rate * mean - 1.0) > 1e-6:
            raise ParseError(
                f"{field_path}: rate {rate} inconsistent with params "
                f"(implied {1.0 / mean:.12g})")
        return cls(float(rate), float(scv), dist, dict(params))
    # no tag: fit from rate/scv
    if "rate" not in d:
        raise ParseError(f"{field_path}: needs either dist or rate")
    rate = float(d["rate"])
    if rate <= 0:
        raise ParseError(f"{field_path}.rate: must be positive")
    scv = float(d.get("scv", 1.0))
    if "idc" in d:
        idc = IdcCurve.from_dict(d["idc"])
        return cls(rate, scv, "empirical", {}, idc)
    return cls.from_rate_scv(rate, scv)


def _model_from_dict(d):
    if not isinstance(d, dict):
        raise ParseError("top level: expected an object")
    if "stations" not in d or "routing" not in d:
        raise ParseError("top level: needs 'stations' and 'routing'")
    stations = []
    for i, sd in enumerate(d["stations"]):
        path = f"stations[{i}]"
        if not isinstance(sd, dict) or "service" not in sd:
            raise ParseError(f"{path}: needs a 'service' object")
        service = _parse_spec(sd["service"], f"{path}.service", "service")
        arrival = None
        if sd.get("arrival") is not None:
            arrival = _parse_spec(sd["arrival"], f"{path}.arrival", "arrival")
        stations.append(Station(service, arrival))
    routing = d["routing"]
    K = len(stations)
    if not isinstance(routing, list) or len(routing) != K or \
            any(not isinstance(r, list) or len(r) != K for r in routing):
        raise ParseError(f"routing: expected a {K}x{K} matrix")
    return NetworkModel(stations, np.asarray(routing, float))


# ---------------------------------------------------------------------------
# bundled example specs

def builtin_names():
    from importlib import resources
    names = []
    for entry in resources.files("oqnet.data").iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[:-5])
    return sorted(names)


def load_builtin(name):
    from importlib import resources
    import io
    ref = resources.files("oqnet.data").joinpath(name + ".json")
    if not ref.is_file():
        raise ParseError(f"no builtin spec named {name!r} "
                         f"(available: {', '.join(builtin_names())})")
    return NetworkModel.load(io.StringIO(ref.read_text()))
