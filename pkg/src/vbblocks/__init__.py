"""Variational Bayesian model construction from building-block nodes.

Models are directed graphs of variable and computational nodes; the
engine evaluates the variational cost (KL divergence to the posterior
minus log evidence) by propagating sufficient statistics, minimises it by
monotone per-node coordinate updates with pattern-search acceleration,
and learns structure by cost-based pruning.
"""

from .graph import (
    CONCENTRATION,
    DELAY_INIT,
    DELAY_INPUT,
    FACTOR,
    MEAN,
    NONLIN_INPUT,
    SELECTOR,
    SUMMAND,
    VARIANCE,
    DuplicateLabel,
    GraphError,
    IllegalRole,
    ModelGraph,
    Node,
    NodeFactory,
    NodeKind,
    Role,
    ScalarChildVectorParent,
    UnresolvedProxy,
    ValidationReport,
    component_mean,
    component_variance,
    label_of,
)
from .learning import (
    CostBreakdown,
    ParamCodec,
    TrainConfig,
    evaluate_cost,
    init_posteriors,
    pattern_search,
    sweep,
    train,
    update_node,
)
from .messages import (
    ForwardStats,
    MeanPotential,
    MissingExpStat,
    VarPotential,
    backward_mean_through_product,
    backward_mean_through_sum,
    backward_var_through_sum,
    constant_stats,
    forward_gaussian,
    forward_nonlin_cut,
    forward_nonlin_expsquare,
    forward_product,
    forward_sum,
    gaussian_child_potentials,
    shift_delay_backward,
    shift_delay_forward,
    truncated_gaussian_moments,
)
from .models import (
    DynSrcSpec,
    DynVarSpec,
    EmptyRow,
    LinmapHandle,
    ModelHandles,
    OutOfRange,
    PredictiveGaussian,
    SynthData,
    build_dynsrc,
    build_dynvar,
    build_linmap,
    handles_from_meta,
    init_from_data,
    make_circular_mask,
    model_meta,
    observe_data,
    predict_next,
    predict_series,
    predictive_perplexity,
    synth_sequence,
)
from .state import EvidenceSchedule
from .structure import (
    NotLinearPath,
    PruneReport,
    add_component,
    cascade_remove,
    prune,
    removal_delta,
)
from .variables import NonPositiveQuad, update_gaussian, update_rectified
from .estimators import DynSrcModel, DynVarModel

__version__ = "0.1.0"
