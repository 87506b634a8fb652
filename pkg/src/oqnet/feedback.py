"""Near-immediate feedback detection and elimination.

A customer leaving a station often returns to it after a short excursion
through stations that are no more loaded than the one it left.  FCFS
approximations treat each such return as fresh work and systematically
overestimate congestion at the looped station.  This module computes the
probability of such a near-immediate return, folds the returns into a
geometrically repeated service, and rewires the network so the station
sees only first-passage arrivals.  The rewired network keeps the original
rates exactly where they are meaningful: the eliminated station receives
(1 - p) times its original rate, stations more loaded than it are
untouched, and the lighter stations are split into a "fresh" copy
(carrying traffic not currently on a return excursion) and a "returning"
copy (carrying the excursions that fail to return).
"""

import json
from dataclasses import dataclass

import numpy as np

from .model import ModelError, NetworkModel, Station
from .renewal_idc import geometric_service
from .flow_calculus import solve_traffic_rates


# utilizations within this of each other count as equal when deciding
# whether a station can be passed through on a return excursion
RHO_TIE_TOL = 1e-9


def _return_detail(routing, rho, station):
    """Passable stations, their hit probabilities and avoidance odds.

    A station is passable if its utilization is no larger than the
    eliminated station's (up to RHO_TIE_TOL, so analytically equal
    utilizations compare as ties).  Returns (passable, q, hbar): q[n] is
    the probability that a customer at passable[n] reaches `station`
    before leaving the passable set; hbar = 1 - q.
    """
    K = routing.shape[0]
    h = station
    passable = [u for u in range(K)
                if u != h and rho[u] <= rho[h] + RHO_TIE_TOL]
    if not passable:
        return passable, np.zeros(0), np.zeros(0)
    Q = routing[np.ix_(passable, passable)]
    r = routing[passable, h]
    q = np.linalg.solve(np.eye(len(passable)) - Q, r)
    q = np.clip(q, 0.0, 1.0)
    return passable, q, 1.0 - q


def near_immediate_probability(model, station, rates=None):
    """Probability that a departure from `station` returns to it while
    visiting only stations with utilization no larger than its own."""
    if rates is None:
        rates = solve_traffic_rates(model)
    P = rates.routing
    passable, q, _ = _return_detail(P, rates.rho, station)
    return float(P[station, station] + P[station, passable] @ q)


def _near_return_edges(routing, station, passable, q):
    """Routing edges that can carry part of a near-immediate return."""
    h = station
    pset = set(passable)
    # stations reachable from h without leaving the passable set
    reach_from = set()
    frontier = [u for u in passable if routing[h, u] > 0]
    while frontier:
        u = frontier.pop()
        if u in reach_from:
            continue
        reach_from.add(u)
        frontier.extend(v for v in pset
                        if routing[u, v] > 0 and v not in reach_from)
    reach_to = {u for u, qu in zip(passable, q) if qu > 0}
    heads = reach_from | {h}
    tails = reach_to | {h}
    return sorted((int(a), int(b)) for a in heads for b in tails
                  if routing[a, b] > 0)


@dataclass
class StationElimination:
    """One station's feedback elimination and its rewired network.

    In `reduced`, original station indices are preserved: the eliminated
    station keeps its index (with the geometrically repeated service),
    blocked stations keep theirs, each passable station u holds its
    "fresh" copy, and the "returning" copy of u sits at
    returning_index[u].
    """

    station: int
    p_hat: float
    passable: list
    return_prob: dict
    eliminated_edges: list
    reduced: NetworkModel
    returning_index: dict

    @property
    def factor(self):
        return 1.0 - self.p_hat

    def to_dict(self):
        return {
            "station": self.station,
            "p_hat": self.p_hat,
            "factor": self.factor,
            "passable": list(self.passable),
            "return_prob": {str(u): v for u, v in self.return_prob.items()},
            "eliminated_edges": [list(e) for e in self.eliminated_edges],
            "returning_index": {str(u): i
                                for u, i in self.returning_index.items()},
            "reduced": self.reduced.to_dict(),
        }


def reduce_network(model, station, rates=None):
    """Build the StationElimination for one station.

    The rewiring is exact in rates: the eliminated station's arrival rate
    becomes (1 - p_hat) times the original (first passages only), its
    utilization is unchanged (service rate scales alike), and every
    station more loaded than it keeps its original rate.
    """
    if rates is None:
        rates = solve_traffic_rates(model)
    h = station
    K = model.K
    P = rates.routing
    passable, q, hbar = _return_detail(P, rates.rho, h)
    p_hat = float(P[h, h] + P[h, passable] @ q)
    if p_hat >= 1.0 - 1e-12:
        raise ModelError(f"station {h} feedback probability {p_hat:.6g} "
                         "leaves no first-passage flow")
    blocked = [b for b in range(K) if b != h and b not in passable]
    r_index = {u: K + n for n, u in enumerate(passable)}
    Kr = K + len(passable)
    Pr = np.zeros((Kr, Kr))
    one_minus = 1.0 - p_hat
    for i in range(K):
        if i == h:
            for b in blocked:
                Pr[h, b] = P[h, b] / one_minus
            for n, u in enumerate(passable):
                Pr[h, r_index[u]] = P[h, u] * hbar[n] / one_minus
        else:
            # blocked stations and fresh copies route exactly as before;
            # passable targets land on the fresh copies (same index)
            Pr[i, :K] = P[i, :]
    for n, u in enumerate(passable):
        if hbar[n] <= 0.0:
            continue        # unreachable copy: everything would return
        row = r_index[u]
        for m, v in enumerate(passable):
            Pr[row, r_index[v]] = P[u, v] * hbar[m] / hbar[n]
        for b in blocked:
            Pr[row, b] = P[u, b] / hbar[n]
    stations = []
    for i in range(K):
        st = model.stations[i]
        if i == h:
            stations.append(Station(geometric_service(st.service, p_hat),
                                    st.arrival))
        else:
            stations.append(Station(st.service, st.arrival))
    for u in passable:
        stations.append(Station(model.stations[u].service, None))
    reduced = NetworkModel(stations, Pr)
    reduced.validate()
    red_rates = solve_traffic_rates(reduced)
    assert abs(red_rates.lam[h] - one_minus * rates.lam[h]) <= \
        1e-9 * max(rates.lam[h], 1.0)
    assert abs(red_rates.rho[h] - rates.rho[h]) <= 1e-9
    assert near_immediate_probability(reduced, h, red_rates) <= 1e-12
    return StationElimination(
        station=h,
        p_hat=p_hat,
        passable=list(passable),
        return_prob={int(u): float(qv) for u, qv in zip(passable, q)},
        eliminated_edges=_near_return_edges(P, h, passable, q),
        reduced=reduced,
        returning_index=r_index,
    )


@dataclass
class EliminationPlan:
    """Feedback eliminations for every station where they apply."""

    items: list

    def stations(self):
        return [e.station for e in self.items]

    def for_station(self, i):
        for e in self.items:
            if e.station == i:
                return e
        return None

    def to_dict(self):
        return {"eliminations": [e.to_dict() for e in self.items]}

    def dump(self, fp, indent=2):
        json.dump(self.to_dict(), fp, indent=indent)


def build_elimination_plan(model, stations=None, rates=None):
    """EliminationPlan for the given stations (default: every station
    with a positive near-immediate return probability)."""
    if rates is None:
        rates = solve_traffic_rates(model)
    if stations is None:
        stations = [h for h in range(model.K)
                    if near_immediate_probability(model, h, rates) > 0.0]
    items = [reduce_network(model, h, rates) for h in stations]
    return EliminationPlan(items)


def adjusted_waiting(w_modified, p_hat):
    """Per-visit waiting time from the modified station's waiting time."""
    return (1.0 - p_hat) * w_modified
