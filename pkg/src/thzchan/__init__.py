"""Space-time-frequency non-stationary THz indoor MIMO channel simulator.

The pipeline is: draw a seeded drop (:mod:`thzchan.init`), evolve it over a
grid of elements, times and carriers (:mod:`thzchan.evolution`), assemble
the transfer function (:mod:`thzchan.ctf`) and estimate statistics
(:mod:`thzchan.stats`). :mod:`thzchan.harness` and the ``thzchan`` command
run whole Monte Carlo ensembles from scenario files.
"""

__version__ = "0.1.0"

from .config import Scenario, load_scenario
from .ctf import CtfTensor, ctf_entry, ctf_tensor, load_ctf, save_ctf
from .evolution import EvolutionGrid, realize_grid
from .exceptions import ConfigError, GeometryError, GridError
from .geometry import AnglePair, ArrayGeometry
from .init import InitConfig, initialize_drop
from .pathloss import PathlossModel

__all__ = [
    "AnglePair",
    "ArrayGeometry",
    "ConfigError",
    "CtfTensor",
    "EvolutionGrid",
    "GeometryError",
    "GridError",
    "InitConfig",
    "PathlossModel",
    "Scenario",
    "ctf_entry",
    "ctf_tensor",
    "initialize_drop",
    "load_ctf",
    "load_scenario",
    "realize_grid",
    "save_ctf",
]
