"""Transmit precoding under power and geographic received-power constraints.

Library layout:

* :mod:`rcbeam.arrays` — planar/linear array steering vectors;
* :mod:`rcbeam.geometry` — protected-region boundaries, sampling, and
  characteristic matrices;
* :mod:`rcbeam.channels` — seeded Rayleigh and clustered channel models;
* :mod:`rcbeam.dual_solver` — projected-subgradient dual ascent;
* :mod:`rcbeam.su_precoding` — single-user optimal / codebook / back-off;
* :mod:`rcbeam.mu_precoding` — multi-user sum-rate / BD / codebook / back-off;
* :mod:`rcbeam.config` and :mod:`rcbeam.harness` — scenario files, Monte
  Carlo runs, boundary probing, CSV output; :mod:`rcbeam.cli` — entry point.
"""

from .arrays import ArrayGeometry, ula_response, upa_response
from .channels import ChannelRealization, ClusterParams, clustered, rayleigh
from .dual_solver import (
    ConstraintSet,
    ConvergenceError,
    DualState,
    PrecoderSet,
    SolverOptions,
    kkt_residual,
    subgradient_search,
)
from .geometry import (
    BoundarySample,
    CharacteristicMatrix,
    CircleBoundary,
    LineSegment,
    PolylineBoundary,
    RegionSpec,
    interference,
    sample_boundary,
)
from .su_precoding import (
    Codebook,
    Precoder,
    capacity,
    modify_codebook,
    random_codebook,
    select_su_codebook,
    solve_su_optimal,
    su_backoff,
    waterfill_power_only,
)
from .mu_precoding import (
    BDInfeasibleError,
    DecoderSet,
    OuterLoopError,
    bd_nullspace,
    bd_waterfill_power_only,
    mmse_decoder,
    mse_matrix,
    mu_backoff,
    select_mu_codebook,
    solve_bd,
    solve_mu_sumrate,
    sum_rate,
)

__version__ = "0.1.0"
