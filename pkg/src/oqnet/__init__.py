"""Performance analysis of open networks of single-server FCFS queues.

Modules
-------
model         network description, distributions, IDC curve container
renewal_idc   exact/estimated IDC curves for renewal processes
flow_calculus network calculus for arrival/departure/flow IDCs
feedback      near-immediate feedback detection and elimination
rq            robust-queueing workload and waiting-time approximations
simulator     discrete-event simulator (compiled core with Python fallback)
cli           command-line interface
"""

__version__ = "0.1.0"

from .model import (IdcCurve, NetworkModel, ArrivalSpec, ServiceSpec, Station,
                    builtin_names, default_grid, load_builtin, log_grid)
from . import renewal_idc, flow_calculus, feedback, rq, simulator
