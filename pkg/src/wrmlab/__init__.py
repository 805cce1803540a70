"""wrmlab: simulation and numerical verification for a two-color hard-core gas
under independent spin-flip dynamics."""

__version__ = "0.1.0"

from .geometry import (
    Ball,
    Box,
    ColoredConfiguration,
    Complement,
    GreyConfiguration,
    cluster_decompose,
    connects,
    set_distance,
)
from .kernels import (
    FamilyEstimate,
    KernelEstimate,
    KernelMode,
    Observable,
    ObservableKind,
    PairedDifference,
    eval_gamma_f,
    eval_gamma_infinity,
    eval_gamma_pm,
    eval_kernel_family,
    eval_kernel_finite_volume,
    eval_nu_color_kernel,
)
from .model import (
    GibbsClass,
    IntensityClass,
    ModelParams,
    RegimeCase,
    classify_regime,
    critical_time,
    decay_length,
    flip_kernel,
    g_of_m,
    phase_cell,
)
from .oracle import OracleValue, oracle_eval
from .probes import (
    ChannelSpec,
    ProbeReport,
    ProbeRow,
    build_channel,
    percolation_comparator_factor,
    phase_scan_csv,
    probe_color_discontinuity,
    probe_decay,
    probe_percolation,
    probe_spatial_discontinuity,
    scan_phase_diagram,
)
from .sampler import (
    BoundaryCondition,
    RngStream,
    evolve_spinflip,
    sample_ppp,
    sample_wrm_exact,
    sample_wrm_mcmc,
)
from .svg import render_svg

__all__ = [
    "Ball",
    "BoundaryCondition",
    "Box",
    "ChannelSpec",
    "ColoredConfiguration",
    "Complement",
    "FamilyEstimate",
    "GibbsClass",
    "GreyConfiguration",
    "IntensityClass",
    "KernelEstimate",
    "KernelMode",
    "ModelParams",
    "Observable",
    "ObservableKind",
    "OracleValue",
    "PairedDifference",
    "ProbeReport",
    "ProbeRow",
    "RegimeCase",
    "RngStream",
    "build_channel",
    "classify_regime",
    "cluster_decompose",
    "connects",
    "critical_time",
    "decay_length",
    "eval_gamma_f",
    "eval_gamma_infinity",
    "eval_gamma_pm",
    "eval_kernel_family",
    "eval_kernel_finite_volume",
    "eval_nu_color_kernel",
    "evolve_spinflip",
    "flip_kernel",
    "g_of_m",
    "oracle_eval",
    "percolation_comparator_factor",
    "phase_cell",
    "phase_scan_csv",
    "probe_color_discontinuity",
    "probe_decay",
    "probe_percolation",
    "probe_spatial_discontinuity",
    "render_svg",
    "sample_ppp",
    "sample_wrm_exact",
    "sample_wrm_mcmc",
    "scan_phase_diagram",
    "set_distance",
]
