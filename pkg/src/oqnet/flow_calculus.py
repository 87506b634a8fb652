"""Network calculus for arrival, departure and flow IDCs.

Given traffic rates, each station's departure IDC is a weighted
combination of its arrival IDC and its (time-scaled) service IDC; flows
are split Markovian-ly with a dependence correction, and superposed with
pairwise covariance corrections.  At each time point this closes into a
linear system over all arrival/flow/departure IDC values, solved over the
whole grid at once.  Feed-forward trees admit an equivalent forward
substitution, kept as an independent path for testing and speed.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .model import IdcCurve, default_grid
from . import renewal_idc


class Unstable(Exception):
    """Some stations have utilization at or above one."""

    def __init__(self, stations, rho):
        self.stations = list(stations)
        self.rho = rho
        super().__init__(
            "unstable stations " +
            ", ".join(f"{i} (rho={rho[i]:.4g})" for i in self.stations))


class NotATree(Exception):
    pass


class SingularSystem(Exception):
    pass


class DegenerateWeight(UserWarning):
    pass


# ---------------------------------------------------------------------------
# traffic rates

@dataclass
class RateSolution:
    """Solved traffic equations.

    lam_flow[i, j] is the rate of the internal flow i -> j; xi is the
    expected-visits matrix (row i: visits to each station by a customer
    currently at i, including the current visit).
    """

    lam0: np.ndarray
    lam: np.ndarray
    rho: np.ndarray
    lam_flow: np.ndarray
    xi: np.ndarray
    routing: np.ndarray

    @property
    def visits(self):
        """visits[l, m]: expected visits to l starting from m."""
        return self.xi.T


def solve_traffic_rates(model):
    """Traffic equations lam = lam0 + P' lam; raises Unstable if any
    station's utilization reaches one."""
    model.validate()
    P = model.routing
    K = model.K
    lam0 = model.external_rates()
    lam = np.linalg.solve(np.eye(K) - P.T, lam0)
    mu = model.service_rates()
    rho = lam / mu
    bad = [i for i in range(K) if rho[i] >= 1.0]
    if bad:
        raise Unstable(bad, rho)
    xi = np.linalg.inv(np.eye(K) - P)
    return RateSolution(lam0, lam, rho, lam[:, None] * P, xi, P.copy())


# ---------------------------------------------------------------------------
# canonical weight function

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SERIES_CUT = 1e-5
_TAIL_CUT = 1e4


def w_star(t):
    """Canonical interpolation weight, increasing from 0 to 1.

    Exact expression in the normal cdf/pdf; a three-term Maclaurin series
    takes over below t = 1e-5 where the direct form loses all digits to
    cancellation.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros(t.shape)
    small = (t > 0) & (t < _SERIES_CUT)
    big = (t >= _SERIES_CUT) & (t < _TAIL_CUT)
    huge = t >= _TAIL_CUT
    if np.any(small):
        ts = t[small]
        rt = np.sqrt(ts)
        out[small] = (_INV_SQRT_2PI * (8.0 / 3.0) * rt - 0.5 * ts
                      + _INV_SQRT_2PI * (4.0 / 15.0) * rt * ts)
    if np.any(big):
        tb = t[big]
        s = np.sqrt(tb)
        # 1 - 2*PhiBar(s) = erf(s / sqrt 2)
        erf_term = 1.0 - erfc(s / math.sqrt(2.0))
        phi = _INV_SQRT_2PI * np.exp(-0.5 * tb)
        num = ((tb * tb + 2.0 * tb - 1.0) * erf_term
               + 2.0 * phi * s * (1.0 + tb) - tb * tb)
        out[big] = num / (2.0 * tb)
    if np.any(huge):
        # the normal tails are below 1e-2000 here; what is left of the
        # exact expression is 1 - 1/(2t), which the direct form loses to
        # t^2-sized roundoff
        out[huge] = 1.0 - 0.5 / t[huge]
    return out[0] if scalar else out


def station_weight(i, rates, cx2, t):
    """Weight of the arrival IDC in station i's departure IDC.

    cx2 is the station's total variability c2_a + c2_s; nonpositive values
    degenerate the time scale and collapse the weight to an indicator.
    """
    t = np.asarray(t, dtype=float)
    rho = rates.rho[i]
    lam = rates.lam[i]
    if lam <= 0.0 or rho <= 0.0:
        return np.where(t > 0, 1.0, 0.0)
    if cx2 <= 0.0:
        warnings.warn(f"station {i}: nonpositive variability {cx2:.3g}; "
                      "weight degenerates to a step", DegenerateWeight,
                      stacklevel=2)
        return np.where(t > 0, 1.0, 0.0)
    return w_star((1.0 - rho) ** 2 * lam * t / (rho * cx2))


# ---------------------------------------------------------------------------
# the three flow operations

def departure_idc(i, arrival, service, rates, cx2, t):
    """Departure IDC values of station i at times t.

    arrival/service are IdcCurve objects; the service curve is evaluated
    at rho * t (busy-fraction time scaling).
    """
    t = np.asarray(t, dtype=float)
    w = station_weight(i, rates, cx2, t)
    return w * arrival.evaluate(t) + (1.0 - w) * service.evaluate(rates.rho[i] * t)


def splitting_alpha(i, j, rates, cx2, t):
    """Markovian-splitting dependence correction for the flow i -> j.

    Proportional to the expected number of visits to i by a customer
    currently at j: zero whenever nothing routed to j can ever return to i.
    """
    p = rates.routing[i, j]
    const = 2.0 * rates.visits[i, j] * p * (1.0 - p)
    if const == 0.0:
        return np.zeros(np.shape(t))
    return const * station_weight(i, rates, cx2, t)


def alpha_constants(rates):
    """Limiting splitting corrections for every flow, as a K x K array."""
    P = rates.routing
    return 2.0 * rates.visits * P * (1.0 - P)


def zeta_tensor(model, rates):
    """Pairwise covariance-rate constants zeta[j, k, i] for contributor
    flows j -> i and k -> i.

    Combines the external streams' variance rates with the multinomial
    routing covariances accumulated along every customer path.
    """
    K = model.K
    P = rates.routing
    lam = rates.lam
    lam0 = rates.lam0
    ca0 = np.array([s.arrival.scv if s.arrival else 0.0 for s in model.stations])
    V = rates.visits            # V[l, m]: visits to l from m
    zeta = np.zeros((K, K, K))
    for i in range(K):
        contrib = np.nonzero(rates.lam_flow[:, i] > 0)[0]
        if contrib.size < 2:
            continue
        nu = {j: P[j, i] * V[j, :] for j in contrib}
        for a in range(contrib.size):
            for b_ in range(a + 1, contrib.size):
                j, k = contrib[a], contrib[b_]
                nj, nk = nu[j], nu[k]
                base = float(np.sum(ca0 * lam0 * nj * nk))
                pj = P @ nj
                pk = P @ nk
                split = float(lam @ (P @ (nj * nk)) - lam @ (pj * pk))
                cross = (lam[j] * P[j, i] * (nk[i] - float(pk[j]))
                         + lam[k] * P[k, i] * (nj[i] - float(pj[k])))
                val = base + split + cross
                zeta[j, k, i] = zeta[k, j, i] = val
    return zeta


def superposition_beta(i, rates, ca2, cs2, zeta, t):
    """Superposition covariance correction at station i.

    Sums over ordered pairs of internal contributor flows.  Each pair's
    time profile follows the canonical weight of the most heavily loaded
    station involved: the contributor with the larger utilization (ties
    broken toward the lower index), unless the receiving station itself
    is strictly busier than both contributors, in which case the
    dependence is relayed through the receiver's own queue and its
    relaxation scale governs.
    """
    t = np.asarray(t, dtype=float)
    lam_i = rates.lam[i]
    if lam_i <= 0:
        return np.zeros(t.shape)
    contrib = np.nonzero(rates.lam_flow[:, i] > 0)[0]
    out = np.zeros(t.shape)
    P = rates.routing
    rho_i = rates.rho[i]
    for a in range(contrib.size):
        for b_ in range(a + 1, contrib.size):
            j, k = contrib[a], contrib[b_]
            z = zeta[j, k, i]
            if z == 0.0:
                continue
            c = j if (rates.rho[j] > rates.rho[k]
                      or (rates.rho[j] == rates.rho[k] and j <= k)) else k
            if rho_i > rates.rho[c]:
                cx2 = ca2[i] + cs2[i]
                arg = (1.0 - rho_i) ** 2 * lam_i * t / (rho_i * cx2)
            else:
                cx2 = P[c, i] * (ca2[c] + cs2[c]) + (1.0 - P[c, i])
                rho_c = rates.rho[c]
                arg = ((1.0 - rho_c) ** 2 * rates.lam_flow[c, i] * t
                       / (rho_c * cx2))
            out += 2.0 * (z / lam_i) * w_star(arg)
    return out


# ---------------------------------------------------------------------------
# limiting variability parameters

@dataclass
class VariabilityParams:
    """Asymptotic variability constants of every stream in the network."""

    ca2: np.ndarray          # arrival variability per station
    cd2: np.ndarray          # departure variability per station
    ca2_flow: np.ndarray     # flow variability, [i, j] for flow i -> j
    c2_alpha: np.ndarray     # limiting splitting corrections per flow
    c2_beta: np.ndarray      # limiting superposition corrections per station
    cs2: np.ndarray          # service variability (copied from the model)
    ca0: np.ndarray          # external-stream variability per station


def solve_limiting_variability(model, rates, zeta, corrections=True):
    """Solve the t = infinity fixed point of the flow equations.

    With ``corrections=False`` the splitting and superposition correction
    constants are pinned to zero (the plain tree-style equations); the
    zeta tensor is then ignored.
    """
    K = model.K
    P = rates.routing
    lam = rates.lam
    lam0 = rates.lam0
    ca0 = np.array([s.arrival.scv if s.arrival else 0.0 for s in model.stations])
    cs2 = model.service_scvs()
    c2_alpha = alpha_constants(rates) if corrections else np.zeros((K, K))
    c2_beta = np.zeros(K)
    for i in range(K):
        if not corrections:
            break
        contrib = np.nonzero(rates.lam_flow[:, i] > 0)[0]
        acc = 0.0
        for a in range(contrib.size):
            for b_ in range(a + 1, contrib.size):
                acc += zeta[contrib[a], contrib[b_], i]
        if lam[i] > 0:
            c2_beta[i] = 2.0 * acc / lam[i]
    # K x K reduced limiting system: at t = inf the departure equals the
    # arrival, so arrivals couple only through the splitting rows.
    A = np.eye(K)
    b = np.zeros(K)
    for i in range(K):
        if lam[i] <= 0:
            b[i] = 1.0
            continue
        b[i] = lam0[i] / lam[i] * ca0[i] + c2_beta[i]
        for j in range(K):
            f = rates.lam_flow[j, i]
            if f > 0:
                share = f / lam[i]
                A[i, j] -= share * P[j, i]
                b[i] += share * ((1.0 - P[j, i]) + c2_alpha[j, i])
    try:
        ca2 = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise SingularSystem("limiting variability system is singular") from None
    resid = np.abs(A @ ca2 - b).max()
    if not np.all(np.isfinite(ca2)) or resid > 1e-10:
        raise SingularSystem(f"limiting system residual {resid:.3g}")
    cd2 = ca2.copy()
    ca2_flow = np.zeros((K, K))
    mask = rates.lam_flow > 0
    ca2_flow[mask] = (P * cd2[:, None] + (1.0 - P) + c2_alpha)[mask]
    return VariabilityParams(ca2, cd2, ca2_flow, c2_alpha, c2_beta, cs2, ca0)


# ---------------------------------------------------------------------------
# full finite-t solve

@dataclass
class FlowSolution:
    """IDC curves for every arrival, flow and departure stream."""

    grid: np.ndarray
    arrival: list
    departure: list
    flow: dict
    params: VariabilityParams
    rates: RateSolution
    diagnostics: dict = field(default_factory=dict)

    def summary_dict(self):
        K = self.rates.lam.size
        return {
            "stations": [
                {"station": i, "lambda": float(self.rates.lam[i]),
                 "rho": float(self.rates.rho[i]),
                 "ca2": float(self.params.ca2[i]),
                 "cd2": float(self.params.cd2[i])}
                for i in range(K)],
            "flows": [
                {"from": int(i), "to": int(j),
                 "rate": float(self.rates.lam_flow[i, j]),
                 "ca2": float(self.params.ca2_flow[i, j])}
                for (i, j) in sorted(self.flow)],
            "diagnostics": self.diagnostics,
        }

    def write_csv_dir(self, path):
        import os
        os.makedirs(path, exist_ok=True)
        for i, c in enumerate(self.arrival):
            with open(os.path.join(path, f"arrival_{i}.csv"), "w") as fh:
                c.write_csv(fh)
        for i, c in enumerate(self.departure):
            with open(os.path.join(path, f"departure_{i}.csv"), "w") as fh:
                c.write_csv(fh)
        for (i, j), c in sorted(self.flow.items()):
            with open(os.path.join(path, f"flow_{i}_{j}.csv"), "w") as fh:
                c.write_csv(fh)


def materialize_curves(model, grid):
    """External-arrival and service IDC curves for every station."""
    ext = [renewal_idc.arrival_idc(s.arrival, grid) for s in model.stations]
    svc = [renewal_idc.service_idc(s.service, grid) for s in model.stations]
    return ext, svc


def assemble_and_solve_idc(model, rates, params, zeta, grid=None, curves=None,
                           max_dense_dim=400):
    """Solve the flow-IDC linear system across the whole time grid.

    Returns a FlowSolution with one curve per arrival, active flow and
    departure stream.  Uses one batched dense solve per time point (the
    unknowns are [arrivals, flows, departures]); beyond `max_dense_dim`
    unknowns it switches to the equivalent station-only reduction.
    """
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, float)
    K = model.K
    P = rates.routing
    lam = rates.lam
    ext_curves, svc_curves = curves if curves else materialize_curves(model, grid)
    T = grid.size

    cx2 = params.ca2 + params.cs2
    W = np.empty((T, K))
    S = np.empty((T, K))
    for i in range(K):
        W[:, i] = station_weight(i, rates, cx2[i], grid)
        S[:, i] = svc_curves[i].evaluate(rates.rho[i] * grid)
    B = np.empty((T, K))
    for i in range(K):
        B[:, i] = superposition_beta(i, rates, params.ca2, params.cs2,
                                     zeta, grid)

    flows = [(i, j) for i in range(K) for j in range(K)
             if rates.lam_flow[i, j] > 0]
    fidx = {f: K + p for p, f in enumerate(flows)}
    F = len(flows)
    n = 2 * K + F
    d0 = K + F

    if n <= max_dense_dim:
        A = np.zeros((T, n, n))
        b = np.zeros((T, n))
        A[:, np.arange(n), np.arange(n)] = 1.0
        for i in range(K):
            if lam[i] <= 0:
                b[:, i] = 1.0
                b[:, d0 + i] = 1.0
                continue
            if rates.lam0[i] > 0:
                b[:, i] = rates.lam0[i] / lam[i] * ext_curves[i].evaluate(grid)
            b[:, i] += B[:, i]
            for j in range(K):
                if rates.lam_flow[j, i] > 0:
                    A[:, i, fidx[(j, i)]] = -rates.lam_flow[j, i] / lam[i]
            A[:, d0 + i, i] = -W[:, i]
            b[:, d0 + i] = (1.0 - W[:, i]) * S[:, i]
        for (i, j) in flows:
            r = fidx[(i, j)]
            A[:, r, d0 + i] = -P[i, j]
            b[:, r] = (1.0 - P[i, j]) + params.c2_alpha[i, j] * W[:, i]
        try:
            X = np.linalg.solve(A, b[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            raise SingularSystem("flow-IDC system is singular") from None
        resid = np.abs(np.einsum("tij,tj->ti", A, X) - b).max()
        conds = [float(np.linalg.cond(A[k]))
                 for k in (0, T // 2, T - 1)]
        Xa = X[:, :K]
        Xd = X[:, d0:]
        Xf = {f: X[:, fidx[f]] for f in flows}
    else:
        # station-only reduction: substitute flow and departure rows into
        # the superposition rows
        A = np.zeros((T, K, K))
        b = np.zeros((T, K))
        A[:, np.arange(K), np.arange(K)] = 1.0
        for i in range(K):
            if lam[i] <= 0:
                b[:, i] = 1.0
                continue
            if rates.lam0[i] > 0:
                b[:, i] = rates.lam0[i] / lam[i] * ext_curves[i].evaluate(grid)
            b[:, i] += B[:, i]
            for j in range(K):
                f = rates.lam_flow[j, i]
                if f > 0:
                    share = f / lam[i]
                    A[:, i, j] -= share * P[j, i] * W[:, j]
                    b[:, i] += share * (
                        P[j, i] * (1.0 - W[:, j]) * S[:, j]
                        + (1.0 - P[j, i])
                        + params.c2_alpha[j, i] * W[:, j])
        try:
            Xa = np.linalg.solve(A, b[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            raise SingularSystem("flow-IDC system is singular") from None
        resid = np.abs(np.einsum("tij,tj->ti", A, Xa) - b).max()
        conds = [float(np.linalg.cond(A[k])) for k in (0, T // 2, T - 1)]
        Xd = W * Xa + (1.0 - W) * S
        Xd[:, lam <= 0] = 1.0
        Xf = {}
        for (i, j) in flows:
            Xf[(i, j)] = (P[i, j] * Xd[:, i] + (1.0 - P[i, j])
                          + params.c2_alpha[i, j] * W[:, i])

    arrival = [IdcCurve(grid, Xa[:, i],
                        params.ca2[i] if lam[i] > 0 else 1.0, 1.0)
               for i in range(K)]
    departure = [IdcCurve(grid, Xd[:, i],
                          params.cd2[i] if lam[i] > 0 else 1.0, 1.0)
                 for i in range(K)]
    flow = {f: IdcCurve(grid, Xf[f], params.ca2_flow[f], 1.0) for f in flows}
    diagnostics = {"residual": float(resid),
                   "condition_numbers": conds,
                   "system_size": n,
                   "reduced": n > max_dense_dim}
    if resid > 1e-8:
        raise SingularSystem(f"flow-IDC residual {resid:.3g}")
    return FlowSolution(grid, arrival, departure, flow, params, rates,
                        diagnostics)


# ---------------------------------------------------------------------------
# feed-forward trees: forward substitution

def _tree_order(model, rates):
    """Topological order of stations; raises NotATree on merges/cycles."""
    K = model.K
    P = rates.routing
    parents = [[] for _ in range(K)]
    for i in range(K):
        for j in range(K):
            if rates.lam_flow[i, j] > 0:
                parents[j].append(i)
    for j in range(K):
        sources = len(parents[j]) + (1 if rates.lam0[j] > 0 else 0)
        if sources > 1:
            raise NotATree(f"station {j} merges {sources} arrival streams")
    indeg = [len(p) for p in parents]
    order = [i for i in range(K) if indeg[i] == 0]
    head = 0
    while head < len(order):
        i = order[head]
        head += 1
        for j in range(K):
            if rates.lam_flow[i, j] > 0:
                indeg[j] -= 1
                if indeg[j] == 0:
                    order.append(j)
    if len(order) < K:
        raise NotATree("routing graph has a cycle")
    return order, parents


def tree_rqna(model, rates, grid=None, curves=None):
    """Forward-substitution solve for feed-forward trees.

    Exactly equivalent to the general linear-system solve on tree
    topologies (no merging, so the splitting and superposition corrections
    vanish identically); raises NotATree otherwise.
    """
    if grid is None:
        grid = default_grid()
    grid = np.asarray(grid, float)
    order, parents = _tree_order(model, rates)
    K = model.K
    P = rates.routing
    lam = rates.lam
    ext_curves, svc_curves = curves if curves else materialize_curves(model, grid)
    zeta = zeta_tensor(model, rates)
    params = solve_limiting_variability(model, rates, zeta)
    assert np.abs(params.c2_beta).max() == 0.0
    cx2 = params.ca2 + params.cs2
    T = grid.size
    Xa = np.ones((T, K))
    Xd = np.ones((T, K))
    Xf = {}
    for i in order:
        if lam[i] <= 0:
            continue
        if rates.lam0[i] > 0:
            Xa[:, i] = ext_curves[i].evaluate(grid)
        else:
            par = parents[i][0]
            Xa[:, i] = Xf[(par, i)]
        w = station_weight(i, rates, cx2[i], grid)
        Xd[:, i] = w * Xa[:, i] + (1.0 - w) * svc_curves[i].evaluate(
            rates.rho[i] * grid)
        for j in range(K):
            if rates.lam_flow[i, j] > 0:
                assert params.c2_alpha[i, j] == 0.0
                Xf[(i, j)] = P[i, j] * Xd[:, i] + (1.0 - P[i, j])
    arrival = [IdcCurve(grid, Xa[:, i],
                        params.ca2[i] if lam[i] > 0 else 1.0, 1.0)
               for i in range(K)]
    departure = [IdcCurve(grid, Xd[:, i],
                          params.cd2[i] if lam[i] > 0 else 1.0, 1.0)
                 for i in range(K)]
    flow = {f: IdcCurve(grid, Xf[f], params.ca2_flow[f], 1.0) for f in Xf}
    return FlowSolution(grid, arrival, departure, flow, params, rates,
                        {"residual": 0.0, "tree": True})
