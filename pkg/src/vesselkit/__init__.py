"""vesselkit: finite-rank vessels for potentials, spectral measures, and KdV.

The pipeline, end to end:

1. A polynomial potential's moment table (:mod:`vesselkit.moments`).
2. A signed atomic spectral measure matching the table
   (:mod:`vesselkit.spectrum`).
3. A finite node realizing the measure and its x-evolution -- tau, the
   base moment, the output parameter matrix, and the recovered potential
   (:mod:`vesselkit.vessel`).
4. The commuting t-flow and the induced KdV field (:mod:`vesselkit.kdv`).

:mod:`vesselkit.algebra`, :mod:`vesselkit.series` and
:mod:`vesselkit.fundsol` supply the structured linear algebra, truncated
power series, and canonical-system fundamental solutions the pipeline is
built on; :mod:`vesselkit.cli` wraps it all for the command line.
"""

from .algebra import (
    GAMMA,
    SIGMA1,
    SIGMA2,
    SpectraOverlap,
    VesselParams,
    sl_params,
)
from .fundsol import QEvaluator, phi, phi_input, phi_star, zero_potential
from .kdv import (
    EvolvedField,
    GridTooCoarse,
    estimate_Tx,
    evolve_B_t,
    evolve_C_t,
    gamma_star_t_residual,
    inverse_vessel_t,
    kdv_order_check,
    kdv_residual,
    q_field,
    snapshot_xt,
    tau_scan,
    traveling_wave_check,
    xt_inverse_residual,
)
from .moments import (
    MomentTable,
    OrderExhausted,
    PotentialModel,
    StructureViolation,
    dhn_residual,
    moments_at_zero,
    recovered_potential,
)
from .series import TruncSeries
from .spectrum import (
    HankelNotPD,
    MeasureFormatError,
    NegativeNode,
    SpectralMeasure,
    assemble_measure,
    gauss_atoms,
    load_measure,
    measure_moments,
    save_measure,
    solve_signed_stieltjes,
    split_signed,
)
from .vessel import (
    InverseVesselSnapshot,
    OmegaBoundary,
    PoleAtLambda,
    SnapshotGrid,
    VesselData,
    VesselSnapshot,
    backlund_check,
    build_node,
    evolve_B,
    evolve_C,
    grid_snapshots,
    integrate_X,
    intertwine_check,
    inverse_identity_residuals,
    inverse_vessel,
    inverse_vessel_sweep,
    snapshot,
    solve_X,
    taylor_of_recovered_q,
    transfer,
    vessel_moments,
    vessel_moments_spectral,
)

__version__ = "0.1.0"

__all__ = [
    "GAMMA",
    "SIGMA1",
    "SIGMA2",
    "EvolvedField",
    "GridTooCoarse",
    "HankelNotPD",
    "InverseVesselSnapshot",
    "MeasureFormatError",
    "MomentTable",
    "NegativeNode",
    "OmegaBoundary",
    "OrderExhausted",
    "PoleAtLambda",
    "PotentialModel",
    "QEvaluator",
    "SnapshotGrid",
    "SpectraOverlap",
    "SpectralMeasure",
    "StructureViolation",
    "TruncSeries",
    "VesselData",
    "VesselParams",
    "VesselSnapshot",
    "assemble_measure",
    "backlund_check",
    "build_node",
    "dhn_residual",
    "estimate_Tx",
    "evolve_B",
    "evolve_B_t",
    "evolve_C",
    "evolve_C_t",
    "gamma_star_t_residual",
    "gauss_atoms",
    "grid_snapshots",
    "integrate_X",
    "intertwine_check",
    "inverse_identity_residuals",
    "inverse_vessel",
    "inverse_vessel_sweep",
    "inverse_vessel_t",
    "kdv_order_check",
    "kdv_residual",
    "load_measure",
    "measure_moments",
    "moments_at_zero",
    "phi",
    "phi_input",
    "phi_star",
    "q_field",
    "recovered_potential",
    "save_measure",
    "sl_params",
    "snapshot",
    "snapshot_xt",
    "solve_X",
    "solve_signed_stieltjes",
    "split_signed",
    "tau_scan",
    "taylor_of_recovered_q",
    "transfer",
    "traveling_wave_check",
    "vessel_moments",
    "vessel_moments_spectral",
    "xt_inverse_residual",
    "zero_potential",
    "__version__",
]
