"""Robust-queueing performance of each station and the whole network.

The mean workload of a single FCFS queue is approximated by the optimal
value of a one-dimensional robust optimization whose uncertainty budget
grows with the arrival variability over time (the arrival IDC plus the
service scv).  With the default budget parameter b = sqrt(2) the result
is exact for M/GI/1.  Waiting times follow from the workload through the
classical workload/waiting decomposition, and network totals combine
per-station waits with expected visit counts.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import default_grid
from . import flow_calculus
from . import feedback as feedback_mod

DEFAULT_B = math.sqrt(2.0)


class GridTooSmall(UserWarning):
    """The workload optimum sat on the time-grid boundary; the grid was
    extended once to cover the heavy-traffic scale."""


@dataclass
class RqResult:
    workload: float
    x_star: float
    extended: bool = False


def _objective(x, rho, mu, scv_s, curve, b):
    budget = rho * x * (curve.evaluate(x) + scv_s) / mu
    return -(1.0 - rho) * x + b * np.sqrt(np.maximum(budget, 0.0))


def rq_workload(lam, mu, scv_s, arrival_idc, b=DEFAULT_B, grid=None):
    """Supremum of the robust workload objective for one station.

    Scans the arrival-IDC grid, extends it once (with a GridTooSmall
    warning) if the best point sits on the right boundary, then refines
    the surrounding bracket by golden-section search.
    """
    rho = lam / mu
    if lam <= 0.0 or rho <= 0.0:
        return RqResult(0.0, 0.0)
    if rho >= 1.0:
        raise ValueError(f"utilization {rho:.4g} is not stable")
    if grid is None:
        grid = arrival_idc.grid
    x = np.asarray(grid, float)
    vals = _objective(x, rho, mu, scv_s, arrival_idc, b)
    k = int(np.argmax(vals))
    extended = False
    if k == x.size - 1:
        cx2 = max(arrival_idc.asymptote + scv_s, 1e-12)
        x_far = 100.0 * rho * cx2 / ((1.0 - rho) ** 2 * lam)
        if x_far > x[-1]:
            warnings.warn(
                f"workload optimum at grid edge {x[-1]:.3g}; extending to "
                f"{x_far:.3g}", GridTooSmall, stacklevel=2)
            ext = np.geomspace(x[-1], x_far, 200)[1:]
            x = np.concatenate([x, ext])
            vals = np.concatenate(
                [vals, _objective(ext, rho, mu, scv_s, arrival_idc, b)])
            k = int(np.argmax(vals))
            extended = True
    lo = x[k - 1] if k > 0 else x[0] / 100.0
    hi = x[k + 1] if k < x.size - 1 else x[-1]
    # golden-section refinement in log time (scale-free, unimodal bracket)
    la, lb = math.log(lo), math.log(hi)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = lb - invphi * (lb - la)
    d = la + invphi * (lb - la)
    fc = _objective(math.exp(c), rho, mu, scv_s, arrival_idc, b)
    fd = _objective(math.exp(d), rho, mu, scv_s, arrival_idc, b)
    for _ in range(48):
        if fc >= fd:
            lb, d, fd = d, c, fc
            c = lb - invphi * (lb - la)
            fc = _objective(math.exp(c), rho, mu, scv_s, arrival_idc, b)
        else:
            la, c, fc = c, d, fd
            d = la + invphi * (lb - la)
            fd = _objective(math.exp(d), rho, mu, scv_s, arrival_idc, b)
    x_best = math.exp((la + lb) / 2.0)
    z_best = float(_objective(x_best, rho, mu, scv_s, arrival_idc, b))
    if vals[k] > z_best:
        x_best, z_best = float(x[k]), float(vals[k])
    return RqResult(max(z_best, 0.0), x_best, extended)


def waiting_from_workload(workload, lam, mu, scv_s):
    """Mean waiting time recovered from the mean workload."""
    rho = lam / mu
    if rho <= 0.0:
        return 0.0
    return max(0.0, workload / rho - (scv_s + 1.0) / (2.0 * mu))


def workload_from_waiting(wait, lam, mu, scv_s):
    """Mean workload reconstructed from a mean waiting time."""
    rho = lam / mu
    return rho * wait + rho * (scv_s + 1.0) / (2.0 * mu)


@dataclass
class StationPerformance:
    station: int
    lam: float
    rho: float
    workload: float
    wait: float
    queue: float
    in_system: float
    sojourn: float
    eliminated: bool = False
    p_hat: float = 0.0

    def to_dict(self):
        return {"station": self.station, "lambda": self.lam,
                "rho": self.rho, "workload": self.workload,
                "wait": self.wait, "queue": self.queue,
                "in_system": self.in_system, "sojourn": self.sojourn,
                "eliminated": self.eliminated, "p_hat": self.p_hat}


@dataclass
class NetworkPerformance:
    stations: list
    totals: dict                 # entry station -> mean time in network
    flow: object                 # FlowSolution of the base network
    plan: object = None          # EliminationPlan when elimination ran
    diagnostics: dict = field(default_factory=dict)

    @property
    def waits(self):
        return np.array([s.wait for s in self.stations])

    def report(self):
        return {
            "stations": [s.to_dict() for s in self.stations],
            "totals": {"by_entry_station":
                       {str(i): v for i, v in sorted(self.totals.items())}},
            "diagnostics": self.diagnostics,
        }


def total_sojourn(rates, waits, service_rates):
    """Expected network time of a customer entering at each entry station:
    visit counts times per-visit sojourns."""
    per_visit = waits + 1.0 / np.asarray(service_rates, float)
    totals = {}
    for i in range(rates.lam.size):
        if rates.lam0[i] > 0:
            totals[i] = float(rates.xi[i] @ per_visit)
    return totals


def _station_rq(i, curve, lam, mu, scv_s, b):
    res = rq_workload(lam, mu, scv_s, curve, b)
    wait = waiting_from_workload(res.workload, lam, mu, scv_s)
    return res, wait


def analyze(model, eliminate=False, b=DEFAULT_B, grid=None,
            max_dense_dim=400):
    """Network performance report.

    Solves the flow-IDC system, runs the robust-queueing optimization at
    every station, and (optionally) replaces the result at every station
    with near-immediate feedback by the elimination procedure: the
    reduced network is solved, the station's robust waiting time is
    computed there with the geometrically repeated service, and scaled
    back to a per-visit wait.
    """
    if grid is None:
        grid = default_grid()
    rates = flow_calculus.solve_traffic_rates(model)
    zeta = flow_calculus.zeta_tensor(model, rates)
    params = flow_calculus.solve_limiting_variability(model, rates, zeta)
    sol = flow_calculus.assemble_and_solve_idc(
        model, rates, params, zeta, grid, max_dense_dim=max_dense_dim)
    mu = model.service_rates()
    cs2 = model.service_scvs()
    K = model.K
    waits = np.zeros(K)
    workloads = np.zeros(K)
    extended = []
    for i in range(K):
        res, w = _station_rq(i, sol.arrival[i], rates.lam[i], mu[i],
                             cs2[i], b)
        workloads[i] = res.workload
        waits[i] = w
        if res.extended:
            extended.append(i)

    plan = None
    elim_info = {}
    if eliminate:
        plan = feedback_mod.build_elimination_plan(model, rates=rates)
        for e in plan.items:
            h = e.station
            red_rates = flow_calculus.solve_traffic_rates(e.reduced)
            # The reduced network's first-passage routing probabilities are
            # conditioned, not Markovian, so the splitting/superposition
            # corrections derived for Markovian routing do not apply there:
            # its flow system runs with the plain tree-style equations.
            red_zeta = np.zeros((e.reduced.K,) * 3)
            red_params = flow_calculus.solve_limiting_variability(
                e.reduced, red_rates, red_zeta, corrections=False)
            red_sol = flow_calculus.assemble_and_solve_idc(
                e.reduced, red_rates, red_params, red_zeta, grid,
                max_dense_dim=max_dense_dim)
            svc = e.reduced.stations[h].service
            res, w_mod = _station_rq(h, red_sol.arrival[h],
                                     red_rates.lam[h], svc.rate, svc.scv, b)
            waits[h] = feedback_mod.adjusted_waiting(w_mod, e.p_hat)
            workloads[h] = workload_from_waiting(waits[h], rates.lam[h],
                                                 mu[h], cs2[h])
            elim_info[h] = {"p_hat": e.p_hat,
                            "reduced_size": e.reduced.K,
                            "residual": red_sol.diagnostics["residual"]}
            if res.extended:
                extended.append(h)

    stations = []
    for i in range(K):
        q = rates.lam[i] * waits[i]
        stations.append(StationPerformance(
            station=i, lam=float(rates.lam[i]), rho=float(rates.rho[i]),
            workload=float(workloads[i]), wait=float(waits[i]),
            queue=float(q), in_system=float(q + rates.rho[i]),
            sojourn=float(waits[i] + 1.0 / mu[i]),
            eliminated=i in elim_info,
            p_hat=float(elim_info.get(i, {}).get("p_hat", 0.0))))
    totals = total_sojourn(rates, waits, mu)
    diagnostics = {
        "b": b,
        "grid_points": int(np.asarray(grid).size),
        "flow_residual": sol.diagnostics["residual"],
        "grid_extended_stations": sorted(set(extended)),
        "eliminations": {str(h): v for h, v in sorted(elim_info.items())},
    }
    return NetworkPerformance(stations, totals, sol, plan, diagnostics)
