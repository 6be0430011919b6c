from .types import LabelSet, ConfusionTensor, StatTensor, PosteriorMatrix, GroundTruth, ROW_SUM_ATOL
from .loaders import load_labels, load_ground_truth, write_labels, write_ground_truth, write_predictions
from .checkpoint import save_checkpoint, load_checkpoint
