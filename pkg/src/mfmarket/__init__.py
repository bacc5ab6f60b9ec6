"""Mean-field agent-based market model and the statistics of its output."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Homogeneous,
    LogNormalTraders,
    ModelConfig,
    PoissonVolume,
    SimulationSeries,
    UniformHeterogeneous,
    UnitVolume,
    run_simulation,
)

__all__ = [
    "__version__",
    "Homogeneous",
    "LogNormalTraders",
    "ModelConfig",
    "PoissonVolume",
    "SimulationSeries",
    "UniformHeterogeneous",
    "UnitVolume",
    "run_simulation",
]
