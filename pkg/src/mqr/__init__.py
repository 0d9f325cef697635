"""Modular quantum reservoir feature maps with a trainable linear readout.

Images are compressed with PCA, encoded into a product state over n qubits,
pushed through a fixed modular reservoir unitary (Ising ZZ dynamics or
Haar-random module blocks, plus inter-module ZZ edges and a global Rx
layer), and read out as all 2^n basis probabilities, which feed a softmax
classifier trained with minibatch Adagrad.
"""

__version__ = "0.1.0"

from .classifier import (
    RunResult,
    SoftmaxModel,
    Standardizer,
    TrainConfig,
    fit_standardizer,
    forward,
    loss_and_gradient,
    predict,
    smoothed_accuracy,
    train,
)
from .datasets import Dataset, fetch, load_dataset
from .entanglement import (
    EntropyReport,
    average_entropy,
    entropy_batch,
    reduced_density_entropy,
    schmidt_entropy,
)
from .harness import (
    ExperimentConfig,
    run_cue_ensemble,
    run_entropy_sweep,
    run_pca_baseline,
    run_single,
    run_sweep,
)
from .preprocess import (
    EncodingAngles,
    PcaModel,
    angles_from_components,
    encode,
    feature_map,
    feature_map_batch,
    fit_pca,
    project_rescale,
)
from .reservoir import (
    ArbitraryEdges,
    BoundaryCross,
    CUEKind,
    InterEdge,
    IntraCoupling,
    ModuleLayout,
    NoEdges,
    ParallelMask,
    ReservoirSpec,
    ZZKind,
    apply_reservoir,
    boundary_cross_edges,
    build_zz_phase,
    enumerate_arbitrary_configs,
    enumerate_parallel_configs,
    intra_angle,
    parse_scheme,
    sample_cue,
)
from .statevector import (
    StateVector,
    apply_block_unitary,
    apply_diagonal_phase,
    apply_single_qubit,
    probabilities,
    product_state,
    zero_state,
)
from .util import derive_seed
