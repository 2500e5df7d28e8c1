"""Tracking switched network topologies from information cascades."""

__version__ = "0.1.0"

from .closed_form import closed_form_pair, cluster_identify, pinv_full_row_rank, unvectorize_theta, vectorize_theta
from .errors import ConfigError, DataError, NumericalError, SwitchTrackError
from .initializer import RidgeConfig, batch_initialize, ridge_pair
from .sem import (
    CascadeSnapshot,
    Dataset,
    ExogenousMatrix,
    GenerationConfig,
    StatePair,
    SwitchSequence,
    generate_cascades,
    generate_dataset,
    kronecker_graph,
    random_state_set,
    sem_residual,
)
from .tracker import SwitchedTopologyTracker, TrackerConfig, TrackerStats, track
