"""netdeploy: optimal deployment of omnidirectional sensors on planar segment
networks via a two-step discrete-time gradient ascent over Voronoi partitions."""

from .errors import (AssumptionViolatedError, DegenerateConfigurationError,
                     InvalidArgumentError, NetdeployError, OffNetworkError,
                     QuadratureError, ScenarioError, SingularConfigurationError,
                     UndefinedDerivativeError)
from .geometry import Point2, Segment, barycenter, partition_segment, point_at, \
    project_point_to_segment, segment, segment_length
from .network import (CollapsedNetwork, Network, build_collapsed, load_network,
                      network_diameter, project_to_network, save_network,
                      validate_network)
from .objective import (DensityField, PerformanceFunction, eval_density, eval_f,
                        eval_f_derivative, h_cell_collapsed, h_cell_full, h_collapsed,
                        h_collapsed_cells, h_full, h_full_cells, step_profile,
                        tanh_profile)
from .voronoi import (CollapsedAllocation, NeighborGraph, NetworkCells, SensorSet,
                      allocate_barycenters_lex, clip_network_cells,
                      delaunay_neighbors)
from .gradient import (DistanceMap, FeasibleDirections, KernelPiece, PiecewiseKernel,
                       SensorDerivative, cell_derivative_full, dir_deriv_on_network,
                       full_network_gradient, grad_collapsed_lex, radius_crossings,
                       segment_integral_derivative)
from .optimizer import (AscentProblem, DeploymentState, PipelineConfig,
                        PipelineResult, RunTrace, StepReport, ascent_iteration,
                        cluster_sensors, line_search, run_pipeline, run_step1,
                        run_step2, spread_and_project)
from .scenario import (ScenarioConfig, benchmark_scenario, generate_benchmark,
                       load_scenario, random_network, read_trace, save_scenario,
                       table1_density, write_trace)
from .render import emit_svg, save_report_figure
from .cli import cli_main

__version__ = "0.1.0"
