"""Command-line interface: analyze, simulate, and compare network specs.

Exit codes: 0 on success, 1 when the model cannot be analyzed or
simulated, 2 when the spec file or the arguments cannot be parsed.
"""

import argparse
import json
import re
import sys

import numpy as np

from . import flow_calculus
from . import model as model_mod
from . import renewal_idc, rq, simulator
from .model import ArrivalSpec, ModelError, NetworkModel, ParseError


def load_spec(arg):
    """A model from a JSON file path or a bundled ``builtin:NAME`` spec."""
    if arg.startswith("builtin:"):
        return model_mod.load_builtin(arg[len("builtin:"):])
    return NetworkModel.load(arg)


def _spec_argument(parser):
    parser.add_argument(
        "--spec", required=True, metavar="PATH|builtin:NAME",
        help="network spec: a JSON file, or one of the bundled specs "
             "(builtin:%s, ...)" % ", builtin:".join(
                 model_mod.builtin_names()[:2]))


def _fmt(x, width=9, prec=4):
    if x != x:          # NaN
        return " " * (width - 3) + "---"
    return f"{x:{width}.{prec}f}"


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(args):
    net = load_spec(args.spec)
    if args.dump_spec:
        net.validate()
        net.dump(sys.stdout)
        return 0
    report = rq.analyze(net, eliminate=args.eliminate, b=args.b)
    if args.json:
        json.dump(report.report(), sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    print("station      lambda      rho     wait  workload    queue"
          "  in-system  sojourn")
    for s in report.stations:
        mark = "  eliminated" if s.eliminated else ""
        print(f"{s.station:7d}  {_fmt(s.lam)} {_fmt(s.rho)} {_fmt(s.wait)}"
              f" {_fmt(s.workload)} {_fmt(s.queue)}  {_fmt(s.in_system)}"
              f" {_fmt(s.sojourn)}{mark}")
    for entry, total in sorted(report.totals.items()):
        print(f"time in network entering at station {entry}: {total:.4f}")
    return 0


# ---------------------------------------------------------------------------
# simulate

def _sim_result(net, args):
    return simulator.simulate(
        net, events=args.events, replications=args.replications,
        seed=args.seed, warmup_frac=args.warmup_frac, backend=args.backend)


def _null_nan(values):
    return [None if v != v else v for v in np.asarray(values).tolist()]


def cmd_simulate(args):
    net = load_spec(args.spec)
    res = _sim_result(net, args)
    if args.json:
        out = {"backend": res.backend, "events": res.events,
               "replications": res.replications}
        for name in ("wait", "sojourn", "queue_length", "number_in_system",
                     "workload", "utilization", "throughput",
                     "total_sojourn"):
            out[name] = _null_nan(getattr(res, name))
            out[name + "_ci"] = _null_nan(getattr(res, name + "_ci"))
        json.dump(out, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    print(f"{res.replications} replications x {res.events} events"
          f" ({res.backend} engine); 95% half-widths")
    print("station     wait    +/-      sojourn    +/-         util"
          "   throughput")
    for i in range(len(res.wait)):
        print(f"{i:7d} {_fmt(res.wait[i])} {_fmt(res.wait_ci[i], 7)}"
              f"    {_fmt(res.sojourn[i])} {_fmt(res.sojourn_ci[i], 7)}"
              f"    {_fmt(res.utilization[i])}    {_fmt(res.throughput[i])}")
    for i, total in enumerate(res.total_sojourn):
        if total == total:
            print(f"time in network entering at station {i}: {total:.4f}"
                  f" +/- {res.total_sojourn_ci[i]:.4f}")
    return 0


# ---------------------------------------------------------------------------
# compare

def cmd_compare(args):
    net = load_spec(args.spec)
    report = rq.analyze(net, eliminate=args.eliminate, b=args.b)
    res = _sim_result(net, args)
    rows = []
    for s in report.stations:
        sim = res.sojourn[s.station]
        rows.append((f"{s.station:7d}", sim, res.sojourn_ci[s.station],
                     s.sojourn, s.eliminated))
    entry_rows = []
    for entry, total in sorted(report.totals.items()):
        entry_rows.append((f"total:{entry:d}".rjust(7), res.total_sojourn[entry],
                           res.total_sojourn_ci[entry], total, False))
    if args.json:
        out = {"stations": [], "totals": []}
        for label, sim, ci, approx, elim in rows + entry_rows:
            rec = {"simulated": sim, "ci": ci, "analyzed": approx,
                   "relative_error": (approx - sim) / sim}
            if label.strip().startswith("total"):
                rec["entry_station"] = int(label.split(":")[1])
                out["totals"].append(rec)
            else:
                rec["station"] = int(label)
                rec["eliminated"] = elim
                out["stations"].append(rec)
        json.dump(out, sys.stdout, indent=2)
        sys.stdout.write("\n")
        return 0
    print("sojourn times: simulation vs analysis"
          f" ({res.replications} x {res.events} events)")
    print("station   simulated     +/-    analyzed   rel err")
    for label, sim, ci, approx, elim in rows + entry_rows:
        err = (approx - sim) / sim
        mark = "  eliminated" if elim else ""
        print(f"{label}   {_fmt(sim)} {_fmt(ci, 7)}   {_fmt(approx)}"
              f"   {err:+6.1%}{mark}")
    return 0


# ---------------------------------------------------------------------------
# idc

_ERLANG_RE = re.compile(r"(?:erlang|e)([0-9]+)$")

_DIST_SCV = {"m": 1.0, "exp": 1.0, "exponential": 1.0, "poisson": 1.0,
             "d": 0.0, "det": 0.0, "deterministic": 0.0}


def _idc_spec(dist, rate, scv):
    """Renewal-stream spec for the idc command; scv-implied when needed."""
    d = dist.lower()
    m = _ERLANG_RE.fullmatch(d)
    if m:
        k = int(m.group(1))
        if k < 1:
            raise ParseError(f"bad Erlang order in {dist!r}")
        implied = 1.0 / k
    elif d in _DIST_SCV:
        implied = _DIST_SCV[d]
    elif d in ("h2", "hyperexp2"):
        if scv is None or scv <= 1.0:
            raise ParseError("--dist h2 needs --scv greater than 1")
        implied = scv
    elif d in ("fit", "auto"):
        if scv is None:
            raise ParseError("--dist fit needs an explicit --scv")
        implied = scv
    else:
        raise ParseError(f"unknown distribution {dist!r}; use m, d, "
                         "erlangK, h2, or fit with --scv")
    if scv is not None and abs(scv - implied) > 1e-9 and d not in ("h2",
                                                                   "hyperexp2",
                                                                   "fit",
                                                                   "auto"):
        raise ParseError(f"--scv {scv} contradicts --dist {dist}")
    return ArrivalSpec.from_rate_scv(rate, implied)


def cmd_idc(args):
    if args.rate <= 0:
        raise ParseError("--rate must be positive")
    spec = _idc_spec(args.dist, args.rate, args.scv)
    grid = model_mod.log_grid(args.t_min, args.t_max, args.per_decade)
    curve = renewal_idc.arrival_idc(spec, grid)
    curve.write_csv(sys.stdout)
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(
        prog="oqnet",
        description="Performance analysis of open queueing networks of "
                    "single-server FCFS stations: dispersion-driven "
                    "robust-queueing approximation and discrete-event "
                    "simulation.")
    sub = ap.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="robust-queueing network analysis")
    _spec_argument(pa)
    pa.add_argument("--eliminate", action="store_true",
                    help="apply near-immediate feedback elimination")
    pa.add_argument("--b", type=float, default=rq.DEFAULT_B,
                    help="robust-optimization budget parameter")
    pa.add_argument("--json", action="store_true", help="JSON output")
    pa.add_argument("--dump-spec", action="store_true",
                    help="echo the parsed spec as JSON and exit")
    pa.set_defaults(func=cmd_analyze)

    def sim_args(p):
        p.add_argument("--events", type=int, default=2_000_000,
                       help="events per replication (default 2000000)")
        p.add_argument("--replications", type=int, default=10)
        p.add_argument("--seed", type=int, default=12345)
        p.add_argument("--warmup-frac", type=float, default=0.2)
        p.add_argument("--backend",
                       choices=("auto", "cython", "python"), default="auto")

    ps = sub.add_parser("simulate", help="discrete-event simulation")
    _spec_argument(ps)
    sim_args(ps)
    ps.add_argument("--json", action="store_true", help="JSON output")
    ps.set_defaults(func=cmd_simulate)

    pc = sub.add_parser("compare",
                        help="analysis vs simulation, side by side")
    _spec_argument(pc)
    pc.add_argument("--eliminate", action="store_true",
                    help="apply near-immediate feedback elimination")
    pc.add_argument("--b", type=float, default=rq.DEFAULT_B)
    sim_args(pc)
    pc.add_argument("--json", action="store_true", help="JSON output")
    pc.set_defaults(func=cmd_compare)

    pi = sub.add_parser("idc", help="dispersion curve of a renewal stream "
                                    "as CSV")
    pi.add_argument("--dist", default="m",
                    help="m, d, erlangK (e.g. erlang2), h2, or fit")
    pi.add_argument("--rate", type=float, default=1.0)
    pi.add_argument("--scv", type=float, default=None,
                    help="required for h2/fit")
    pi.add_argument("--t-min", type=float, default=1e-3)
    pi.add_argument("--t-max", type=float, default=1e7)
    pi.add_argument("--per-decade", type=int, default=25,
                    help="grid points per decade (default 25)")
    pi.set_defaults(func=cmd_idc)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"oqnet: {exc}", file=sys.stderr)
        return 2
    except (ModelError, flow_calculus.Unstable, flow_calculus.SingularSystem,
            ValueError, RuntimeError) as exc:
        print(f"oqnet: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"oqnet: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
