"""Few-shot segmentation with word-embedding conditioned stacked co-attention."""

from ._coseg import (
    ConfigError,
    ContractError,
    CosegError,
    DataError,
    DimensionError,
    IoError,
    LookupError,
    ParseError,
    SamplingError,
    TrainingDiverged,
    binary_iou,
    coattention_block,
    generate_synthetic,
    gradcheck,
    iou,
    make_folds,
    matmul,
    mean_iou,
    per_class_iou,
    read_class_list,
    run_cli,
    sigmoid,
    softmax_columns,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
