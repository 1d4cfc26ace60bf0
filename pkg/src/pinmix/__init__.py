"""pinmix: corner-flip Glauber dynamics of the wall-constrained pinning model.

A simulation and exact-analysis laboratory: exact equilibrium combinatorics,
a coupled event-driven simulator on shared clock streams, small-instance
linear-algebra oracles, and mixing-time experiments.
"""

from .statespace import (ModelParams, Path, contacts, gibbs_prob, leq, lift,
                         log_partition, maximal_path, minimal_path, project,
                         sample_equilibrium)

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "Path", "contacts", "gibbs_prob", "leq", "lift",
    "log_partition", "maximal_path", "minimal_path", "project",
    "sample_equilibrium", "__version__",
]
