"""Memory kernels, influence functions and Dyck-path diagrammatics for open quantum systems."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConditioningError,
    DataError,
    MemkernelError,
    NumericalError,
    RangeError,
    ResourceError,
    ValidationError,
)
from .system import SystemHamiltonian, spin_boson  # noqa: E402
from .bath import (  # noqa: E402
    BathStatistics,
    EtaTable,
    InfluenceTable,
    SpectralDensity,
    bath_influence,
    eta_coefficients,
    influence_table,
    ohmic,
)
from .dyck import DyckPath, KernelTermRecipe, enumerate_paths, recipes  # noqa: E402
from .pathsum import PropagatorSeries, exact_propagators, iterative_quapi  # noqa: E402
from .gqme import KernelSeries, build_kernels_dyck, propagate_gqme, ttm_extract  # noqa: E402
from .inversion import extract_from_trajectories, invert_influence_series  # noqa: E402
