"""Channel prediction laboratory.

Pipeline: simulate a time-correlated MIMO fading channel, train a
quantile-grid predictor on clean histories, conformally calibrate its
quantiles on held-out data, and run a recursive filter that predicts
each slot from a calibrated prior and refines its history with
importance-sampled posterior means of the noisy observations.  Classic
baselines (outdated estimates, AR Kalman tracking) and a sweep harness
round out the lab.
"""

from ._kernels import IMPL as kernel_backend
from .baselines import (ARFitError, ARModel, fit_ar, kf_init, kf_run, kf_step,
                        outdated_predict)
from .bayes import (DegenerateLikelihoodError, FilterConfig, FilterRun, dcbf_run,
                    importance_weights, likelihood, posterior_mean)
from .channel import (ChannelTrace, DatasetSplit, SystemConfig, generate_trace,
                      link_budget, observe, observe_sequence, read_trace,
                      split_dataset, windows, write_trace)
from .conformal import (Calibration, PiecewiseUniformPrior, build_prior, calibrate,
                        calibration_offsets, conformity_scores, coverage,
                        empirical_quantile, load_calibration, save_calibration,
                        training_bounds)
from .harness import (CellFailure, ExperimentConfig, ExperimentResult, METHODS,
                      ResultRow, aggregate, nmse_db, nmse_energy_db, parse_config,
                      read_results, report_text, run_experiment, write_results)
from .predictor import (PredictorParams, QuantileLevels, TrainConfig, TrainResult,
                        TrainingDivergedError, backward, forward, forward_batch,
                        init_params, load_checkpoint, pinball_loss, save_checkpoint,
                        total_loss, train)

__version__ = "0.1.0"
