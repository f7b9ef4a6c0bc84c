"""lorenzlab: a numerical laboratory for the Lorenz flow and its geometric
model -- trajectory simulation, Lyapunov exponents, empirical measures,
dimension and hitting-time statistics, correlation decay, large deviations
and escape rates, all reproducible from a config plus a master seed."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateSpectrumError,
    FrameCollapseError,
    IntegrationError,
    LorenzLabError,
    NotLorenzLikeError,
    NumericalError,
    PreconditionError,
    SingularLineError,
)
from .model import (
    ModelParams,
    SectionPoint,
    SuspensionPoint,
    derive_exponents,
    linear_passage,
    map_orbit,
    one_d_derivative,
    one_d_map,
    return_map,
    return_map_orbit,
    roof,
    suspension_evolve,
)
from .ode import (
    EquilibriumSpectrum,
    Jet,
    Params3,
    SectionEvent,
    Trajectory,
    detect_section_crossings,
    equilibrium_spectrum,
    integrate,
    propagate_jet,
    vector_field,
)
