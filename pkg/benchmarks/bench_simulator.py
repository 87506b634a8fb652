"""Benchmark the two simulator engines against each other.

Runs the same replications on the pure-Python and the compiled engine,
reports events/second for both, and verifies that the results are
bit-identical (they share one random stream by construction).

Usage:
    python3 benchmarks/bench_simulator.py [--events N] [--reps R] [--seed S]
"""

import argparse
import sys
import time

import numpy as np

from oqnet import model, simulator


def build_model():
    """Three-station loop with a mix of service variabilities."""
    routing = [[0.0, 1.0, 0.0],
               [0.5, 0.0, 0.5],
               [0.0, 0.5, 0.0]]
    scvs = (2.25, 0.0, 0.25)
    rates = (0.675 / 0.9, 0.9 / 0.675, 0.45 / 0.9)
    stations = []
    for i in range(3):
        svc = model.ServiceSpec.from_rate_scv(rates[i], scvs[i])
        arr = model.ArrivalSpec.poisson(0.225) if i == 0 else None
        stations.append(model.Station(svc, arr))
    return model.NetworkModel(stations, routing)


def run_backend(net, backend, events, reps, seed):
    t0 = time.perf_counter()
    res = simulator.simulate(net, events=events, replications=reps,
                             seed=seed, backend=backend)
    elapsed = time.perf_counter() - t0
    return res, elapsed


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=500_000,
                    help="events per replication (default 500000)")
    ap.add_argument("--reps", type=int, default=3,
                    help="replications per backend (default 3)")
    ap.add_argument("--seed", type=int, default=20240817)
    args = ap.parse_args(argv)

    net = build_model()
    backends = simulator.available_backends()
    if "cython" not in backends:
        print("compiled engine not available; benchmarking python only")

    results = {}
    for backend in backends:
        res, elapsed = run_backend(net, backend, args.events, args.reps,
                                   args.seed)
        rate = args.events * args.reps / elapsed
        results[backend] = (res, elapsed)
        print(f"{backend:>7s}: {elapsed:8.2f} s   {rate:12.0f} events/s")

    if len(results) == 2:
        py, cy = results["python"][0], results["cython"][0]
        identical = all(
            np.array_equal(py.per_rep[k], cy.per_rep[k], equal_nan=True)
            for k in py.per_rep)
        speedup = results["python"][1] / results["cython"][1]
        print(f"speedup x{speedup:.1f}   bit-identical: {identical}")
        if not identical:
            print("ERROR: backends disagree", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
