"""Pairwise-learning optimization with adaptive sample-size stages.

Doubly-stochastic proximal gradient descent for pairwise losses (AUC
maximization in particular), with opposite-pair importance sampling, exact
enumeration oracles, stability/convergence bound calculators, and a
reproducible benchmark harness.
"""

from .data import (
    ClassEmptyError,
    Dataset,
    ParseError,
    SparseVector,
    SplitSpec,
    binarize,
    generate_synthetic,
    load_libsvm,
    nested_prefix,
    parse_libsvm,
    scale_max_abs,
    serialize,
    split,
)
from .metrics import TiesPolicy, auc_bruteforce, auc_rank, mean_stderr
from .optimizer import (
    ConstantStep,
    DivergenceError,
    FixedInner,
    LinearInner,
    PerStageStep,
    PowerLawInner,
    TrainConfig,
    TrainTrace,
    inner_dsgd,
    stage_sizes,
    train_adaptive,
    train_plain,
)
from .pairloss import (
    Model,
    Normalization,
    PairLossKind,
    full_gradient,
    full_objective,
    pair_grad,
    pair_loss,
)
from .prox import LazyShrinkState, Regularizer, prox_elastic_net, reg_value
from .rng import SeedStream
from .sampling import (
    DistKind,
    PairDistribution,
    importance_weight,
    sample_pair,
    stochastic_gradient,
    variance_exact,
    variance_mc,
)
from .theory import (
    TheoryConstants,
    convergence_bound,
    optimal_inner_iters,
    stability_generalization_bound,
    stability_probe,
    statistical_accuracy,
    warm_start_bound,
)

__version__ = "0.1.0"
