from .model import (
    LabelSet,
    ConfusionTensor,
    StatTensor,
    PosteriorMatrix,
    GroundTruth,
    load_labels,
    load_ground_truth,
    save_checkpoint,
    load_checkpoint,
)
from .estep import posterior, posterior_all, sample_stat
from .batch_em import mv_posterior, m_step, em_fit, predict
from .online import StepSchedule, ProjectionFamily, normalize, sa_update, project, init_stats, online_fit
from .metrics import error_rate, marginal_log_likelihood, fixed_point_residual, stationarity_gap
from .synth import gen_instance

__version__ = "0.1.0"
