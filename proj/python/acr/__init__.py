"""Replay-based continual learning on synthetic task streams."""

from ._acr import (
    AccuracyMatrix,
    InputKind,
    Sample,
    Task,
    TaskStream,
    acc,
    bwt,
    cache_stream,
    ce_loss,
    class_quotas,
    coefficient_of_variation,
    confidence_variance,
    corrupt,
    default_config,
    gradcheck_max_error,
    load_stream_cache,
    make_image_stream,
    make_synthetic_stream,
    pcl_loss,
    run_experiment,
)

__all__ = [
    "AccuracyMatrix",
    "InputKind",
    "Sample",
    "Task",
    "TaskStream",
    "acc",
    "bwt",
    "cache_stream",
    "ce_loss",
    "class_quotas",
    "coefficient_of_variation",
    "confidence_variance",
    "corrupt",
    "default_config",
    "gradcheck_max_error",
    "load_stream_cache",
    "make_image_stream",
    "make_synthetic_stream",
    "pcl_loss",
    "run_experiment",
]
