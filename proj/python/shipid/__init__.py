"""Ship maneuvering model identification: reference model, recurrent
acceleration models, training and evaluation."""

from ._core import (
    DivergenceError,
    IoError,
    MalformedFileError,
    Network,
    NumericError,
    ReferenceModel,
    SchemaError,
    ShipidError,
    UsageError,
    __version__,
    generate,
    mse,
    read_dataset,
    rollout,
    sha256_file,
    train,
    write_dataset,
)

__all__ = [
    "DivergenceError",
    "IoError",
    "MalformedFileError",
    "Network",
    "NumericError",
    "ReferenceModel",
    "SchemaError",
    "ShipidError",
    "UsageError",
    "__version__",
    "generate",
    "mse",
    "read_dataset",
    "rollout",
    "sha256_file",
    "train",
    "write_dataset",
]
