"""Counterfactual-based SMOTE for outlier-regime regression, with comparator
oversamplers and an imbalance-ratio benchmark harness."""

__version__ = "0.1.0"

from .counterfactuals import (
    DiceConfig,
    DiceLite,
    NativePair,
    PairValidity,
    SyntheticCounterfactual,
    filter_unpaired,
    generate_cfa,
    generate_dice_lite,
    mine_native_pairs,
)
from .data import (
    BoundaryMode,
    ClassBoundary,
    ClassStats,
    Dataset,
    FeatureSchema,
    Instance,
    Label,
    class_stats,
    compute_boundary,
    label_classes,
    read_csv,
    write_csv,
)
from .errors import CFSmoteError, DataError, DegenerateTestError, MethodError
from .evaluation import (
    EvalResult,
    MethodSpec,
    PredictorConfig,
    SweepDataset,
    SweepReport,
    WilcoxonOutcome,
    bench_runtime,
    mae,
    run_sweep,
    wilcoxon_signed_rank,
)
from .neighbors import KNNRegressor, NeighborIndex, Normalizer, distance, knn, knn_regress
from .oversampling import (
    AugmentationResult,
    AugmenterConfig,
    Method,
    Provenance,
    augment,
    augment_with_result,
    borderline_smote,
    cfa_smote,
    danger_set,
    dice_smote,
    gsmote,
    run_method,
    smote,
)
from .synthgen import SynthConfig, generate, generate_test, make_ir_grid, table1_grid

import types as _types

__all__ = [n for n, v in dict(globals()).items() if not n.startswith("_") and not isinstance(v, _types.ModuleType)]
