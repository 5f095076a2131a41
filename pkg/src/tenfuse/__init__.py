"""Sparse tensor fusion of identity and attribute features.

Public surface: order-3 tensor primitives, Tucker decomposition
(HOSVD/HOOI), the bilinear fusion classifier in full and factored form,
the multi-task objective with group-lasso slice sparsification, the
training pipeline, and retrieval/verification evaluation.
"""

from .data import Dataset, generate_synthetic, load_dataset, save_dataset
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateModelError,
    DimensionError,
    EvalError,
    FormatError,
    InputError,
    LabelError,
    NumericError,
    TenfuseError,
    UnsupportedError,
)
from .evaluate import EvalReport, cmc, mean_average_precision, roc, score_histogram
from .linalg import SvdResult, leading_left_singular_vectors, thin_svd
from .model import (
    Encoders,
    FeaturePair,
    ModelParams,
    encode,
    forward_decomposed,
    forward_full,
    fused_feature,
    fused_features,
    load_model,
    predict_attributes,
    save_model,
)
from .objective import (
    Batch,
    LossBreakdown,
    LossWeights,
    attribute_loss,
    contrastive,
    cross_entropy,
    gradients,
    group_lasso,
    pair_distance,
    prox_group_lasso,
    total_loss,
)
from .pipeline import (
    BenchReport,
    SparsityReport,
    TrainConfig,
    adam_step,
    bench_forward,
    compact,
    sample_pairs,
    sparsity_report,
    train,
)
from .tensor import (
    fold,
    frobenius_norm,
    kronecker,
    load_tensor,
    mode_product,
    mode_slice_norms,
    save_tensor,
    unfold,
)
from .tucker import (
    TuckerFactors,
    full_parameter_count,
    hooi,
    hosvd,
    load_factors,
    parameter_count,
    reconstruct,
    reconstruction_error,
    save_factors,
)

__version__ = "0.1.0"
