"""Scene-conditioned long-term 3D human motion forecasting at desk scale.

Three chained stages: goal sampling (CVAE over 2D destinations), 3D path
planning (hourglass over image + pose heatmaps + goal, emitting 2D path
heatmaps and torso depths), and 3D pose refinement (attention encoder-decoder
over a lifted, replicated initial estimate). Plus a procedural indoor dataset
generator, stage-wise training, and an MPJPE evaluation protocol.
"""

__version__ = "0.1.0"

from .errors import (CheckpointError, ConfigError, DataError, EvaluationError,
                     SceneMotionError)
from .config import (PipelineConfig, check_manifest_consistency, config_to_ini,
                     load_config, save_config)
from .pipeline import (PredictionBundle, Rollout, StageModels,
                       bundle_predictions, load_models, run_pipeline,
                       sequence_seed, truth_from_sample)
from .evalkit import (ErrorReport, SequencePrediction, SequenceTruth,
                      best_of_k, destination_error, error_curves,
                      evaluate_deterministic, format_report, mpjpe,
                      parse_error_curves, report_timesteps)
from .visualize import overlay_image, plot_error_curves, plot_paths, visualize
