"""Pure-Python discrete-event engine for the network simulator.

``_engine_cy.pyx`` is the compiled twin of this module: it implements the
exact same event loop drawing from the same hand-rolled xoshiro256++
stream, so the two backends produce bit-identical results.  Any change
here must be mirrored there.

The network state is a set of single-server FCFS stations.  Two event
kinds exist per station -- service completion and external arrival -- and
the next event is the earliest scheduled one, with completions breaking
ties against arrivals and lower station indices breaking ties within a
kind.  Service times are drawn when a customer joins a queue, so the
station's unfinished workload is known at every instant; between
consecutive events the workload of a busy station drains linearly, which
gives the exact integral ``W(t0)*dt - dt**2/2`` for the stretch.
"""

import math
from collections import deque

import numpy as np

from ._tables import (KIND_DETERMINISTIC, KIND_ERLANG, KIND_EXPONENTIAL,
                      KIND_HYPEREXP2, KIND_MIXED_ERLANG, KIND_NONE,
                      KIND_PHASE_TYPE)

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_NEG53 = 1.1102230246251565e-16     # 2 ** -53
_INF = float("inf")


def seed_state(seed, rep):
    """Four xoshiro256++ words from a splitmix64 stream over (seed, rep)."""
    sm = (int(seed) + (int(rep) + 1) * _GOLDEN) & _MASK
    out = []
    for _ in range(4):
        sm = (sm + _GOLDEN) & _MASK
        z = sm
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        out.append(z ^ (z >> 31))
    if not any(out):
        out[0] = 1
    return out


def _rotl(x, k):
    return ((x << k) & _MASK) | (x >> (64 - k))


def next_u64(s):
    """Advance the xoshiro256++ state in place and return one word."""
    s0, s1, s2, s3 = s
    result = (_rotl((s0 + s3) & _MASK, 23) + s0) & _MASK
    t = (s1 << 17) & _MASK
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return result


def uniform(s):
    """One double in [0, 1) with 53 random bits."""
    return (next_u64(s) >> 11) * _TWO_NEG53


def sample(kind, data, off, s):
    """Draw one variate from the sampler encoded at data[off]."""
    if kind == KIND_EXPONENTIAL:
        return -math.log1p(-uniform(s)) / data[off]
    if kind == KIND_ERLANG:
        k = int(data[off])
        total = 0.0
        for _ in range(k):
            total -= math.log1p(-uniform(s))
        return total / data[off + 1]
    if kind == KIND_HYPEREXP2:
        rate = data[off + 1] if uniform(s) < data[off] else data[off + 2]
        return -math.log1p(-uniform(s)) / rate
    if kind == KIND_DETERMINISTIC:
        return data[off]
    if kind == KIND_MIXED_ERLANG:
        k = int(data[off])
        n = k - 1 if uniform(s) < data[off + 1] else k
        total = 0.0
        for _ in range(n):
            total -= math.log1p(-uniform(s))
        return total / data[off + 2]
    # phase-type walk: hold in each phase, then move by the outcome row
    n = int(data[off])
    alpha_cdf = off + 1
    rates = off + 1 + n
    rows = off + 1 + 2 * n
    u = uniform(s)
    phase = 0
    while phase < n and u >= data[alpha_cdf + phase]:
        phase += 1
    total = 0.0
    while phase < n:
        total -= math.log1p(-uniform(s)) / data[rates + phase]
        u = uniform(s)
        row = rows + phase * (n + 1)
        nxt = 0
        while u >= data[row + nxt]:
            nxt += 1
        if nxt == n:            # absorbed
            break
        phase = nxt
    return total


def run(K, routing_cum, svc_kind, svc_off, svc_data, ext_kind, ext_off,
        ext_data, n_events, warmup_events, seed, rep, log_station):
    """Simulate one replication of ``n_events`` events.

    The first ``warmup_events`` events only advance the state; all
    accumulators are zeroed when that budget is reached.  Returns the
    tuple (completed, arrived, entered, wait_sum, sojourn_sum, area_w,
    area_q, area_x, busy_time, exits, net_sojourn_sum, duration,
    depart_times) with per-station arrays, where exits and
    net_sojourn_sum are keyed by the station the customer entered the
    network at, and depart_times holds departure instants of station
    ``log_station`` measured from the warmup cut (empty if -1).
    """
    rng = seed_state(seed, rep)
    # plain lists index noticeably faster than numpy scalars here
    row_cum = [list(map(float, r)) for r in np.asarray(routing_cum)]
    svc_kind = [int(x) for x in svc_kind]
    svc_off = [int(x) for x in svc_off]
    svc_data = [float(x) for x in svc_data]
    ext_kind = [int(x) for x in ext_kind]
    ext_off = [int(x) for x in ext_off]
    ext_data = [float(x) for x in ext_data]

    queues = [deque() for _ in range(K)]
    nq = [0] * K                    # waiting + in service
    work = [0.0] * K                # unfinished work at t_now
    next_comp = [_INF] * K
    next_arr = [_INF] * K
    cur_arrival = [0.0] * K         # in-service customer bookkeeping
    cur_svc = [0.0] * K
    cur_entry_t = [0.0] * K
    cur_entry_st = [0] * K

    completed = [0.0] * K
    arrived = [0.0] * K
    entered = [0.0] * K
    wait_sum = [0.0] * K
    soj_sum = [0.0] * K
    area_w = [0.0] * K
    area_q = [0.0] * K
    area_x = [0.0] * K
    busy_t = [0.0] * K
    exits = [0.0] * K
    net_soj_sum = [0.0] * K
    dep = []

    t_now = 0.0
    t_meas = 0.0
    for i in range(K):
        if ext_kind[i] != KIND_NONE:
            next_arr[i] = sample(ext_kind[i], ext_data, ext_off[i], rng)

    for ev in range(n_events):
        if ev == warmup_events and warmup_events > 0:
            for i in range(K):
                completed[i] = arrived[i] = entered[i] = 0.0
                wait_sum[i] = soj_sum[i] = 0.0
                area_w[i] = area_q[i] = area_x[i] = busy_t[i] = 0.0
                exits[i] = net_soj_sum[i] = 0.0
            dep.clear()
            t_meas = t_now

        # next event: completions beat arrivals, low index beats high
        best_t = _INF
        best_kind = -1
        best_i = -1
        for i in range(K):
            if next_comp[i] < best_t:
                best_t = next_comp[i]
                best_kind = 0
                best_i = i
        for i in range(K):
            if next_arr[i] < best_t:
                best_t = next_arr[i]
                best_kind = 1
                best_i = i
        if best_i < 0:
            break                   # nothing scheduled anywhere

        dt = best_t - t_now
        if dt > 0.0:
            # no completion falls strictly inside the stretch, so a busy
            # station drains at unit rate the whole way
            for i in range(K):
                n_i = nq[i]
                if n_i > 0:
                    w0 = work[i]
                    area_w[i] += w0 * dt - 0.5 * dt * dt
                    w0 -= dt
                    work[i] = w0 if w0 > 0.0 else 0.0
                    busy_t[i] += dt
                    area_x[i] += n_i * dt
                    area_q[i] += (n_i - 1) * dt
        t_now = best_t

        if best_kind == 0:
            i = best_i
            soj = t_now - cur_arrival[i]
            soj_sum[i] += soj
            wait_sum[i] += soj - cur_svc[i]
            completed[i] += 1.0
            ex_t = cur_entry_t[i]
            ex_st = cur_entry_st[i]
            if i == log_station:
                dep.append(t_now)
            # advance the server before the routed customer re-arrives,
            # so immediate feedback joins the end of the queue
            nq[i] -= 1
            if nq[i] > 0:
                a, sv, et, es = queues[i].popleft()
                next_comp[i] = t_now + sv
                cur_arrival[i] = a
                cur_svc[i] = sv
                cur_entry_t[i] = et
                cur_entry_st[i] = es
            else:
                next_comp[i] = _INF
            u = uniform(rng)
            row = row_cum[i]
            j = 0
            while j < K and u >= row[j]:
                j += 1
            if j == K:
                exits[ex_st] += 1.0
                net_soj_sum[ex_st] += t_now - ex_t
            else:
                sv = sample(svc_kind[j], svc_data, svc_off[j], rng)
                work[j] += sv
                arrived[j] += 1.0
                if nq[j] == 0:
                    next_comp[j] = t_now + sv
                    cur_arrival[j] = t_now
                    cur_svc[j] = sv
                    cur_entry_t[j] = ex_t
                    cur_entry_st[j] = ex_st
                else:
                    queues[j].append((t_now, sv, ex_t, ex_st))
                nq[j] += 1
        else:
            i = best_i
            next_arr[i] = t_now + sample(ext_kind[i], ext_data, ext_off[i],
                                         rng)
            entered[i] += 1.0
            sv = sample(svc_kind[i], svc_data, svc_off[i], rng)
            work[i] += sv
            arrived[i] += 1.0
            if nq[i] == 0:
                next_comp[i] = t_now + sv
                cur_arrival[i] = t_now
                cur_svc[i] = sv
                cur_entry_t[i] = t_now
                cur_entry_st[i] = i
            else:
                queues[i].append((t_now, sv, t_now, i))
            nq[i] += 1

    duration = t_now - t_meas
    dep_arr = np.asarray(dep, dtype=float)
    if dep_arr.size:
        dep_arr -= t_meas
    return (np.asarray(completed), np.asarray(arrived), np.asarray(entered),
            np.asarray(wait_sum), np.asarray(soj_sum), np.asarray(area_w),
            np.asarray(area_q), np.asarray(area_x), np.asarray(busy_t),
            np.asarray(exits), np.asarray(net_soj_sum), duration, dep_arr)
