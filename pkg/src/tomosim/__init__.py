"""tomosim: online probe-allocation simulation for network tomography.

Library layout mirrors the pipeline: `topology` builds graphs and probe
sets, `probes` samples stochastic feedback, `estimators` turns tallies into
link-parameter estimates, `oed` evaluates design criteria and optimal
allocations, `policies` hosts the online selection rules, and `harness`
runs seeded Monte Carlo experiments behind the `tomosim` CLI.
"""

from .errors import (
    ConfigError,
    EdgeListError,
    GenerationError,
    IdentifiabilityError,
    InsufficientDataError,
    TomographyError,
    UnsupportedTopologyError,
)
from .harness import ExperimentResult, RunSeries, SimConfig, run_experiment, run_once
from .oed import CriterionSpec
from .policies import PolicyConfig
from .probes import RngStream, TallyState
from .topology import (
    MeasurementMatrix,
    ProbeDescriptor,
    ProbeSet,
    Topology,
    build_er,
    build_star,
    canonical_star_unicast_probes,
    general_unicast_probes,
    load_edge_list,
    ri_multicast_probes,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CriterionSpec",
    "EdgeListError",
    "ExperimentResult",
    "GenerationError",
    "IdentifiabilityError",
    "InsufficientDataError",
    "MeasurementMatrix",
    "PolicyConfig",
    "ProbeDescriptor",
    "ProbeSet",
    "RngStream",
    "RunSeries",
    "SimConfig",
    "TallyState",
    "TomographyError",
    "Topology",
    "UnsupportedTopologyError",
    "build_er",
    "build_star",
    "canonical_star_unicast_probes",
    "general_unicast_probes",
    "load_edge_list",
    "ri_multicast_probes",
    "run_experiment",
    "run_once",
    "__version__",
]
