"""Scene encoder: network, prototype loss, training and checkpoints."""
from .estimator import RandomProjectionEncoder, SceneEncoder, TrainingError, train_encoder
from .features import SceneBatch, collate, featurize
from .losses import LossConfig, classification_loss, cosine_distance, prototype_loss, total_loss
from .model import EncoderModel, NonFiniteActivation, masked_max
