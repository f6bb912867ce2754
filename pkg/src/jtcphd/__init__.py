"""Gaussian-mixture trajectory filtering with joint multi-target tracking
and classification, plus a scenario simulator and evaluation suite."""

from .components import (BirthEntry, BirthModel, GaussianTrajectory,
                         InvalidMergeError, ModelHypothesis, PhdState,
                         TrajectoryComponent, append_predicted_state,
                         empty_state, gaussian_trajectory,
                         last_state_marginal, make_birth_components,
                         merge_pair)
from .filter import (FilterConfig, MeasurementFrame, TrajectoryEstimate,
                     UpdateDiagnostics, extract, lscan_window, predict,
                     reduce_mixture, step, update)
from .metrics import (MetricConfig, MetricSeries, TMResult,
                      cardinality_stats, classification_accuracy,
                      trajectory_metric)
from .models import (ClutterModel, ConfigurationError, InvalidParameterError,
                     MotionModel, SensorModel, SingularGeometryError,
                     TargetClassSpec, clutter_intensity, ct_transition,
                     cv_transition, markov_predict, observation_jacobian,
                     observe, process_noise, state_vector)
from .simulator import (GroundTruth, RunRecord, RunResults, ScenarioConfig,
                        TargetSpec, TruthTrajectory, generate_frame,
                        generate_truth, run_monte_carlo, run_single)

__version__ = "0.1.0"
