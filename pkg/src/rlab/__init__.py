"""Resolvent metrics on weighted graphs and heat-kernel estimate verification."""

from .errors import CapError, DomainError, GraphFormatError, RlabError, SolverError
from .graphs import (Region, WeightedGraph, exterior_boundary, gen_gasket,
                     gen_lattice, gen_tree, graph_ball, load_graph, save_graph,
                     validate_p0)
from .forms import FormOperator, LinearSolver, apply_killed, apply_laplacian, energy, solve_psd
from .green import (GreenTable, green_row, green_series_oracle, qm,
                    reproducing_check, rm_set_to_set, rm_to_complement)
from .metrics import (MetricTable, QuasiMetricTable, ScalingProfile, ball,
                      covering_number, load_metric, metric_rows, metrize,
                      quasi_constant, rm_matrix, safe_radius, save_metric,
                      vd_scan, volume)
from .walks import (ExitStats, KernelSeries, TailBoundConfig, choose_order,
                    exit_distribution, exit_moment_exact, exit_moment_series,
                    exit_qmoment, heat_kernel, ledif_check, mean_exit,
                    pdiff_check, simulate_exit, time_diff)
from .verify import (CheckResult, assemble_report, einstein_scan,
                     elliptic_harnack, hke_scan, parabolic_harnack, ppa_check,
                     prepare_context, rmr2_scan, run_suites)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
