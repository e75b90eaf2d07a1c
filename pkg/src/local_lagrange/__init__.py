"""Local Lagrange functions for kernel interpolation on the sphere and torus."""
from .errors import (
    ConditioningError,
    ConvergenceError,
    DegenerateNodesError,
    LocalLagrangeError,
    LocalUnisolventError,
    NonUnisolventError,
    NumericalError,
    ResourceCapError,
)
from .geometry import (
    Manifold,
    MeshStats,
    NeighborIndex,
    NodeSet,
    gen_fibonacci,
    gen_icosahedral,
    gen_torus,
    mesh_stats,
    read_nodes,
    separation_radius,
    write_nodes,
)
from .interpolate import (
    InterpolantCoeffs,
    LagrangeCoeffMatrix,
    SaddleSystem,
    assemble,
    evaluate,
    lagrange_all,
    solve_saddle,
)
from .kernels import KernelSpec, kernel_matrix, parse_kernel, side_basis
from .localbasis import (
    SparseLocalBasis,
    TruncationSpec,
    build_local_basis,
    footprint_count,
    truncate_lagrange,
)
from .solver import GmresConfig, PreconditionedOperator, SolveReport, gmres, solve_interpolation

__version__ = "0.1.0"
