from ._core import (
    Model,
    SumflowError,
    run_experiment,
    synthesize,
    train,
    __version__,
)

__all__ = [
    "Model",
    "SumflowError",
    "run_experiment",
    "synthesize",
    "train",
    "__version__",
]
