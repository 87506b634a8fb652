# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled twin of the pure-Python event engine.

This module mirrors ``_engine_py.py`` statement for statement: same event
ordering, same accounting, and the same xoshiro256++ / splitmix64 random
stream in the same draw order, so both backends return bit-identical
results.  Any change here must be mirrored there.
"""

from libc.math cimport log1p

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef unsigned long long u64

cdef double _TWO_NEG53 = 1.1102230246251565e-16     # 2 ** -53
cdef double _INF = float("inf")

cdef enum:
    KIND_EXPONENTIAL = 0
    KIND_ERLANG = 1
    KIND_HYPEREXP2 = 2
    KIND_DETERMINISTIC = 3
    KIND_MIXED_ERLANG = 4
    KIND_PHASE_TYPE = 5
    KIND_NONE = -1


cdef inline u64 _rotl(u64 x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline void _seed_state(u64 seed, u64 rep, u64* s) nogil:
    cdef u64 sm = seed + (rep + 1) * <u64>0x9E3779B97F4A7C15
    cdef u64 z
    cdef int k
    for k in range(4):
        sm = sm + <u64>0x9E3779B97F4A7C15
        z = sm
        z = (z ^ (z >> 30)) * <u64>0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * <u64>0x94D049BB133111EB
        s[k] = z ^ (z >> 31)
    if s[0] == 0 and s[1] == 0 and s[2] == 0 and s[3] == 0:
        s[0] = 1


cdef inline u64 _next_u64(u64* s) nogil:
    cdef u64 s0 = s[0], s1 = s[1], s2 = s[2], s3 = s[3]
    cdef u64 result = _rotl(s0 + s3, 23) + s0
    cdef u64 t = s1 << 17
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


cdef inline double _uniform(u64* s) nogil:
    return <double>(_next_u64(s) >> 11) * _TWO_NEG53


cdef double _sample(int kind, double[::1] data, int off, u64* s) nogil:
    cdef int k, n, phase, nxt, alpha_cdf, rates, rows, row, m
    cdef double total, u, rate
    if kind == KIND_EXPONENTIAL:
        return -log1p(-_uniform(s)) / data[off]
    if kind == KIND_ERLANG:
        k = <int>data[off]
        total = 0.0
        for m in range(k):
            total -= log1p(-_uniform(s))
        return total / data[off + 1]
    if kind == KIND_HYPEREXP2:
        rate = data[off + 1] if _uniform(s) < data[off] else data[off + 2]
        return -log1p(-_uniform(s)) / rate
    if kind == KIND_DETERMINISTIC:
        return data[off]
    if kind == KIND_MIXED_ERLANG:
        k = <int>data[off]
        n = k - 1 if _uniform(s) < data[off + 1] else k
        total = 0.0
        for m in range(n):
            total -= log1p(-_uniform(s))
        return total / data[off + 2]
    # phase-type walk: hold in each phase, then move by the outcome row
    n = <int>data[off]
    alpha_cdf = off + 1
    rates = off + 1 + n
    rows = off + 1 + 2 * n
    u = _uniform(s)
    phase = 0
    while phase < n and u >= data[alpha_cdf + phase]:
        phase += 1
    total = 0.0
    while phase < n:
        total -= log1p(-_uniform(s)) / data[rates + phase]
        u = _uniform(s)
        row = rows + phase * (n + 1)
        nxt = 0
        while u >= data[row + nxt]:
            nxt += 1
        if nxt == n:            # absorbed
            break
        phase = nxt
    return total


def run(int K, routing_cum, svc_kind_in, svc_off_in, svc_data_in,
        ext_kind_in, ext_off_in, ext_data_in, long long n_events,
        long long warmup_events, object seed, long long rep,
        int log_station):
    """Simulate one replication; see the pure-Python twin for the contract."""
    cdef double[:, ::1] row_cum = np.ascontiguousarray(routing_cum,
                                                       dtype=np.float64)
    cdef int[::1] svc_kind = np.ascontiguousarray(svc_kind_in, dtype=np.int32)
    cdef int[::1] svc_off = np.ascontiguousarray(svc_off_in, dtype=np.int32)
    cdef double[::1] svc_data = np.ascontiguousarray(svc_data_in,
                                                     dtype=np.float64)
    cdef int[::1] ext_kind = np.ascontiguousarray(ext_kind_in, dtype=np.int32)
    cdef int[::1] ext_off = np.ascontiguousarray(ext_off_in, dtype=np.int32)
    cdef double[::1] ext_data = np.ascontiguousarray(ext_data_in,
                                                     dtype=np.float64)

    cdef u64 rng[4]
    _seed_state(<u64>(int(seed) & ((1 << 64) - 1)), <u64>rep, rng)

    # waiting-customer ring buffers, one row per station, shared capacity
    cdef long long cap = 256
    qa_o = np.zeros((K, cap))           # arrival instant
    qs_o = np.zeros((K, cap))           # drawn service time
    qe_o = np.zeros((K, cap))           # network entry instant
    qn_o = np.zeros((K, cap), dtype=np.int32)   # network entry station
    cdef double[:, ::1] qa = qa_o
    cdef double[:, ::1] qs = qs_o
    cdef double[:, ::1] qe = qe_o
    cdef int[:, ::1] qn = qn_o
    head_o = np.zeros(K, dtype=np.int64)
    cnt_o = np.zeros(K, dtype=np.int64)
    cdef long long[::1] head = head_o
    cdef long long[::1] cnt = cnt_o

    nq_o = np.zeros(K, dtype=np.int64)
    cdef long long[::1] nq = nq_o
    work_o = np.zeros(K)
    next_comp_o = np.full(K, _INF)
    next_arr_o = np.full(K, _INF)
    cur_arrival_o = np.zeros(K)
    cur_svc_o = np.zeros(K)
    cur_entry_t_o = np.zeros(K)
    cur_entry_st_o = np.zeros(K, dtype=np.int32)
    cdef double[::1] work = work_o
    cdef double[::1] next_comp = next_comp_o
    cdef double[::1] next_arr = next_arr_o
    cdef double[::1] cur_arrival = cur_arrival_o
    cdef double[::1] cur_svc = cur_svc_o
    cdef double[::1] cur_entry_t = cur_entry_t_o
    cdef int[::1] cur_entry_st = cur_entry_st_o

    completed_o = np.zeros(K)
    arrived_o = np.zeros(K)
    entered_o = np.zeros(K)
    wait_sum_o = np.zeros(K)
    soj_sum_o = np.zeros(K)
    area_w_o = np.zeros(K)
    area_q_o = np.zeros(K)
    area_x_o = np.zeros(K)
    busy_t_o = np.zeros(K)
    exits_o = np.zeros(K)
    net_soj_sum_o = np.zeros(K)
    cdef double[::1] completed = completed_o
    cdef double[::1] arrived = arrived_o
    cdef double[::1] entered = entered_o
    cdef double[::1] wait_sum = wait_sum_o
    cdef double[::1] soj_sum = soj_sum_o
    cdef double[::1] area_w = area_w_o
    cdef double[::1] area_q = area_q_o
    cdef double[::1] area_x = area_x_o
    cdef double[::1] busy_t = busy_t_o
    cdef double[::1] exits = exits_o
    cdef double[::1] net_soj_sum = net_soj_sum_o

    cdef long long dep_cap = 4096
    cdef long long dep_n = 0
    dep_o = np.empty(dep_cap)
    cdef double[::1] dep = dep_o

    cdef double t_now = 0.0
    cdef double t_meas = 0.0
    cdef double best_t, dt, w0, soj, ex_t, u, sv, a, et
    cdef long long ev, n_i, slot, m2, src
    cdef int i, j, best_kind, best_i, ex_st, es, i2

    for i in range(K):
        if ext_kind[i] != KIND_NONE:
            next_arr[i] = _sample(ext_kind[i], ext_data, ext_off[i], rng)

    for ev in range(n_events):
        if ev == warmup_events and warmup_events > 0:
            for i in range(K):
                completed[i] = 0.0
                arrived[i] = 0.0
                entered[i] = 0.0
                wait_sum[i] = 0.0
                soj_sum[i] = 0.0
                area_w[i] = 0.0
                area_q[i] = 0.0
                area_x[i] = 0.0
                busy_t[i] = 0.0
                exits[i] = 0.0
                net_soj_sum[i] = 0.0
            dep_n = 0
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
                if dep_n == dep_cap:
                    dep_cap *= 2
                    dep_o2 = np.empty(dep_cap)
                    dep_o2[:dep_n] = dep_o[:dep_n]
                    dep_o = dep_o2
                    dep = dep_o
                dep[dep_n] = t_now
                dep_n += 1
            # advance the server before the routed customer re-arrives,
            # so immediate feedback joins the end of the queue
            nq[i] -= 1
            if nq[i] > 0:
                slot = head[i]
                a = qa[i, slot]
                sv = qs[i, slot]
                et = qe[i, slot]
                es = qn[i, slot]
                head[i] = (slot + 1) % cap
                cnt[i] -= 1
                next_comp[i] = t_now + sv
                cur_arrival[i] = a
                cur_svc[i] = sv
                cur_entry_t[i] = et
                cur_entry_st[i] = es
            else:
                next_comp[i] = _INF
            u = _uniform(rng)
            j = 0
            while j < K and u >= row_cum[i, j]:
                j += 1
            if j == K:
                exits[ex_st] += 1.0
                net_soj_sum[ex_st] += t_now - ex_t
            else:
                sv = _sample(svc_kind[j], svc_data, svc_off[j], rng)
                work[j] += sv
                arrived[j] += 1.0
                if nq[j] == 0:
                    next_comp[j] = t_now + sv
                    cur_arrival[j] = t_now
                    cur_svc[j] = sv
                    cur_entry_t[j] = ex_t
                    cur_entry_st[j] = ex_st
                else:
                    if cnt[j] == cap:
                        # grow every ring, unrolling each to offset zero
                        qa_o2 = np.zeros((K, cap * 2))
                        qs_o2 = np.zeros((K, cap * 2))
                        qe_o2 = np.zeros((K, cap * 2))
                        qn_o2 = np.zeros((K, cap * 2), dtype=np.int32)
                        for i2 in range(K):
                            for m2 in range(cnt[i2]):
                                src = (head[i2] + m2) % cap
                                qa_o2[i2, m2] = qa[i2, src]
                                qs_o2[i2, m2] = qs[i2, src]
                                qe_o2[i2, m2] = qe[i2, src]
                                qn_o2[i2, m2] = qn[i2, src]
                            head[i2] = 0
                        qa_o, qs_o, qe_o, qn_o = qa_o2, qs_o2, qe_o2, qn_o2
                        qa, qs, qe, qn = qa_o, qs_o, qe_o, qn_o
                        cap *= 2
                    slot = (head[j] + cnt[j]) % cap
                    qa[j, slot] = t_now
                    qs[j, slot] = sv
                    qe[j, slot] = ex_t
                    qn[j, slot] = ex_st
                    cnt[j] += 1
                nq[j] += 1
        else:
            i = best_i
            next_arr[i] = t_now + _sample(ext_kind[i], ext_data, ext_off[i],
                                          rng)
            entered[i] += 1.0
            sv = _sample(svc_kind[i], svc_data, svc_off[i], rng)
            work[i] += sv
            arrived[i] += 1.0
            if nq[i] == 0:
                next_comp[i] = t_now + sv
                cur_arrival[i] = t_now
                cur_svc[i] = sv
                cur_entry_t[i] = t_now
                cur_entry_st[i] = i
            else:
                if cnt[i] == cap:
                    qa_o2 = np.zeros((K, cap * 2))
                    qs_o2 = np.zeros((K, cap * 2))
                    qe_o2 = np.zeros((K, cap * 2))
                    qn_o2 = np.zeros((K, cap * 2), dtype=np.int32)
                    for i2 in range(K):
                        for m2 in range(cnt[i2]):
                            src = (head[i2] + m2) % cap
                            qa_o2[i2, m2] = qa[i2, src]
                            qs_o2[i2, m2] = qs[i2, src]
                            qe_o2[i2, m2] = qe[i2, src]
                            qn_o2[i2, m2] = qn[i2, src]
                        head[i2] = 0
                    qa_o, qs_o, qe_o, qn_o = qa_o2, qs_o2, qe_o2, qn_o2
                    qa, qs, qe, qn = qa_o, qs_o, qe_o, qn_o
                    cap *= 2
                slot = (head[i] + cnt[i]) % cap
                qa[i, slot] = t_now
                qs[i, slot] = sv
                qe[i, slot] = t_now
                qn[i, slot] = i
                cnt[i] += 1
            nq[i] += 1

    cdef double duration = t_now - t_meas
    dep_arr = dep_o[:dep_n].copy()
    if dep_n > 0:
        dep_arr -= t_meas
    return (completed_o, arrived_o, entered_o, wait_sum_o, soj_sum_o,
            area_w_o, area_q_o, area_x_o, busy_t_o, exits_o, net_soj_sum_o,
            duration, dep_arr)
