"""Compile a network model into flat numeric tables for the event engines.

Both the pure-Python and the compiled engine consume the same arrays, so a
model is translated exactly once per simulation run.  Samplers are encoded
as an integer kind plus a slice of a shared float parameter vector:

====  ==============  =======================================================
kind  distribution    parameter layout
====  ==============  =======================================================
0     exponential     [rate]
1     Erlang-k        [k, phase_rate]            (sum of k exponentials)
2     hyperexp-2      [p1, mu1, mu2]
3     deterministic   [value]
4     mixed Erlang    [k, q, phase_rate]         (k-1 phases w.p. q, else k)
5     phase type      [n, alpha_cdf(n), rate(n), outcome_cdf(n*(n+1))]
====  ==============  =======================================================

The phase-type walk draws the start phase from ``alpha_cdf``; each phase
holds for an exponential time with its own rate, then the next outcome is
drawn from that phase's row of ``outcome_cdf`` whose last column is
absorption.  A draw beyond the end of ``alpha_cdf`` absorbs immediately
(defective initial vector), yielding a zero sample.
"""

import numpy as np

from ..model import UnknownDistributionTag

KIND_EXPONENTIAL = 0
KIND_ERLANG = 1
KIND_HYPEREXP2 = 2
KIND_DETERMINISTIC = 3
KIND_MIXED_ERLANG = 4
KIND_PHASE_TYPE = 5
KIND_NONE = -1          # station without external arrivals


def _encode(dist, params):
    """Return (kind, parameter list) for one tagged distribution."""
    if dist == "exponential":
        return KIND_EXPONENTIAL, [float(params["rate"])]
    if dist == "erlang":
        k = int(params["k"])
        return KIND_ERLANG, [float(k), k * float(params["rate"])]
    if dist == "hyperexp2":
        return KIND_HYPEREXP2, [float(params["p1"]), float(params["mu1"]),
                                float(params["mu2"])]
    if dist == "deterministic":
        return KIND_DETERMINISTIC, [float(params["value"])]
    if dist == "mixed-erlang":
        return KIND_MIXED_ERLANG, [float(int(params["k"])),
                                   float(params["q"]), float(params["nu"])]
    if dist == "phase-type":
        alpha = np.asarray(params["alpha"], dtype=float)
        T = np.asarray(params["T"], dtype=float)
        n = alpha.size
        rates = -np.diag(T)
        if np.any(rates <= 0):
            raise ValueError("phase-type generator needs negative diagonal")
        exit_rates = -T.sum(axis=1)
        vec = [float(n)]
        vec.extend(np.cumsum(alpha))
        vec.extend(rates)
        for i in range(n):
            probs = np.empty(n + 1)
            probs[:n] = T[i] / rates[i]
            probs[i] = 0.0
            probs[n] = exit_rates[i] / rates[i]
            cdf = np.cumsum(probs)
            cdf[n] = 1.0        # guard roundoff so the walk always resolves
            vec.extend(cdf)
        return KIND_PHASE_TYPE, vec
    raise UnknownDistributionTag(
        f"cannot sample from distribution tag {dist!r}")


class SimTables:
    """Flat numeric description of a network consumed by the engines."""

    def __init__(self, model):
        K = model.K
        self.K = K
        P = np.asarray(model.routing, dtype=float)
        self.routing_cum = np.cumsum(P, axis=1).copy()

        svc_kind = np.empty(K, dtype=np.int32)
        ext_kind = np.empty(K, dtype=np.int32)
        svc_off = np.empty(K, dtype=np.int32)
        ext_off = np.empty(K, dtype=np.int32)
        svc_data, ext_data = [], []
        for i, st in enumerate(model.stations):
            kind, vec = _encode(st.service.dist, st.service.params)
            svc_kind[i] = kind
            svc_off[i] = len(svc_data)
            svc_data.extend(vec)
            if st.arrival is not None and st.arrival.rate > 0:
                kind, vec = _encode(st.arrival.dist, st.arrival.params)
                ext_kind[i] = kind
                ext_off[i] = len(ext_data)
                ext_data.extend(vec)
            else:
                ext_kind[i] = KIND_NONE
                ext_off[i] = 0
        self.svc_kind, self.svc_off = svc_kind, svc_off
        self.ext_kind, self.ext_off = ext_kind, ext_off
        self.svc_data = np.asarray(svc_data, dtype=float)
        self.ext_data = np.asarray(ext_data, dtype=float)
        if self.ext_data.size == 0:     # keep memoryviews non-empty
            self.ext_data = np.zeros(1)
        self.lam0 = model.external_rates()


def compile_tables(model):
    return SimTables(model)
