"""Shared network builders for the test suite.

The two workhorse topologies: a three-station loop network (one external
feed, two feedback cycles) in four load patterns x five variability
patterns, and a ten-station network with nested feedback loops.
"""

import numpy as np

from oqnet.model import ArrivalSpec, NetworkModel, ServiceSpec, Station

THREE_ROUTING = [[0.0, 1.0, 0.0],
                 [0.5, 0.0, 0.5],
                 [0.0, 0.5, 0.0]]

# traffic intensities per load case (station order 1..3 -> index 0..2)
THREE_RHO = {
    1: (0.675, 0.9, 0.45),
    2: (0.9, 0.675, 0.9),
    3: (0.9, 0.675, 0.45),
    4: (0.9, 0.675, 0.675),
}

# service scv patterns (svc1, svc2, svc3); the external stream is Poisson
# in every case
THREE_SCV = {
    "A": (0.0, 0.0, 0.0),
    "B": (2.25, 0.0, 0.25),
    "C": (0.25, 0.25, 2.25),
    "D": (0.0, 2.25, 2.25),
    "E": (8.0, 8.0, 0.25),
}

THREE_EXTERNAL_RATE = 0.225
# solved traffic rates for the loop topology at external rate 0.225
THREE_LAMBDA = np.array([0.675, 0.9, 0.45])


def three_station(case="D1"):
    """Loop network 1 -> 2 <-> 3 with feedback 2 -> 1, e.g. case 'D1'."""
    scv_case, rho_case = case[0], int(case[1])
    scvs = THREE_SCV[scv_case]
    rho = np.asarray(THREE_RHO[rho_case], float)
    mu = THREE_LAMBDA / rho
    stations = []
    for i in range(3):
        svc = ServiceSpec.from_rate_scv(mu[i], scvs[i])
        arr = ArrivalSpec.poisson(THREE_EXTERNAL_RATE) if i == 0 else None
        stations.append(Station(svc, arr))
    return NetworkModel(stations, THREE_ROUTING)


TEN_ROUTING = np.zeros((10, 10))
for _i, _row in enumerate([
        {1: 1.0},            # 1 -> 2
        {2: 0.5, 3: 0.5},    # 2 -> 3, 4
        {0: 0.5, 4: 0.5},    # 3 -> 1, 5
        {5: 0.5, 7: 0.5},    # 4 -> 6, 8
        {3: 1.0},            # 5 -> 4
        {6: 1.0},            # 6 -> 7
        {7: 0.5, 8: 0.5},    # 7 -> 8, 9
        {5: 0.5, 8: 0.5},    # 8 -> 6, 9
        {4: 0.5, 9: 0.5},    # 9 -> 5, 10
        {8: 0.5},            # 10 -> 9 (0.5 exit)
]):
    for _j, _p in _row.items():
        TEN_ROUTING[_i, _j] = _p

TEN_MEAN_SVC = np.array([0.45, 0.30, 0.90, 0.30, 27.0 / 70.0,
                         0.20, 2.0 / 15.0, 0.20, 0.15, 0.20])
TEN_SCV = np.array([0.5, 2.0, 2.0, 0.25, 0.25, 2.0, 1.0, 2.0, 0.5, 0.5])
TEN_LAMBDA = np.array([4 / 3, 4 / 3, 2 / 3, 3.0, 7 / 3, 3.0, 3.0, 3.0, 4.0, 2.0])
TEN_RHO = TEN_LAMBDA * TEN_MEAN_SVC


def ten_station():
    """Ten-station network with nested feedback, Poisson rate-1 source."""
    stations = []
    for i in range(10):
        svc = ServiceSpec.from_rate_scv(1.0 / TEN_MEAN_SVC[i], TEN_SCV[i])
        arr = ArrivalSpec.poisson(1.0) if i == 0 else None
        stations.append(Station(svc, arr))
    return NetworkModel(stations, TEN_ROUTING)


def single_queue(rho, scv_s, arrival_scv=1.0, mu=1.0, feedback=0.0):
    """One station, optional self-loop feedback."""
    lam_ext = rho * mu * (1.0 - feedback)
    if arrival_scv == 1.0:
        arr = ArrivalSpec.poisson(lam_ext)
    else:
        arr = ArrivalSpec.from_rate_scv(lam_ext, arrival_scv)
    svc = ServiceSpec.from_rate_scv(mu, scv_s)
    return NetworkModel([Station(svc, arr)], [[feedback]])


def tandem(rhos, scvs, arrival_scv=1.0, lam=1.0):
    """Series line: external feed at station 0, exit after the last."""
    K = len(rhos)
    P = np.zeros((K, K))
    for i in range(K - 1):
        P[i, i + 1] = 1.0
    stations = []
    for i in range(K):
        svc = ServiceSpec.from_rate_scv(lam / rhos[i], scvs[i])
        arr = None
        if i == 0:
            arr = (ArrivalSpec.poisson(lam) if arrival_scv == 1.0
                   else ArrivalSpec.from_rate_scv(lam, arrival_scv))
        stations.append(Station(svc, arr))
    return NetworkModel(stations, P)


def random_feedforward(K, rng, poisson=True):
    """Random acyclic network: edges only i -> j for i < j, random exits."""
    P = np.zeros((K, K))
    for i in range(K - 1):
        succ = np.unique(rng.integers(i + 1, K, size=int(rng.integers(1, 3))))
        mass = rng.uniform(0.4, 0.95)
        P[i, succ] = mass / succ.size
    lam0 = np.zeros(K)
    lam0[0] = 1.0
    if K > 1:
        lam0[int(rng.integers(1, K))] += rng.uniform(0.2, 0.8)
    lam = np.linalg.solve(np.eye(K) - P.T, lam0)
    rho = rng.uniform(0.3, 0.8, size=K)
    stations = []
    for i in range(K):
        rate = lam[i] / rho[i] if lam[i] > 0 else 1.0
        svc = ServiceSpec.from_rate_scv(rate,
                                        1.0 if poisson else rng.uniform(0.3, 3.0))
        arr = None
        if lam0[i] > 0:
            arr = (ArrivalSpec.poisson(lam0[i]) if poisson
                   else ArrivalSpec.from_rate_scv(lam0[i], rng.uniform(0.5, 2.0)))
        stations.append(Station(svc, arr))
    return NetworkModel(stations, P)


def random_tree(K, rng):
    """Random out-forest with splits: no stream ever merges.

    Stations are either roots (fed by one external stream) or have exactly
    one parent flow; splits and probabilistic exits are free.
    """
    roots = {0} | {int(j) for j in range(1, K) if rng.random() < 0.25}
    P = np.zeros((K, K))
    children = {}
    for j in range(1, K):
        if j in roots:
            continue
        par = int(rng.integers(0, j))
        children.setdefault(par, []).append(j)
    for i, kids in children.items():
        mass = rng.uniform(0.5, 1.0)
        probs = rng.dirichlet(np.ones(len(kids))) * mass
        for j, p in zip(kids, probs):
            P[i, j] = p
    lam0 = np.zeros(K)
    for j in roots:
        lam0[j] = rng.uniform(0.3, 1.5)
    lam = np.linalg.solve(np.eye(K) - P.T, lam0)
    rho = rng.uniform(0.3, 0.85, size=K)
    stations = []
    for i in range(K):
        rate = lam[i] / rho[i] if lam[i] > 0 else 1.0
        svc = ServiceSpec.from_rate_scv(rate,
                                        float(rng.choice([0.25, 0.5, 1.0, 2.0, 4.0])))
        arr = None
        if lam0[i] > 0:
            arr = ArrivalSpec.from_rate_scv(
                lam0[i], float(rng.choice([0.5, 1.0, 2.0])))
        stations.append(Station(svc, arr))
    return NetworkModel(stations, P)
