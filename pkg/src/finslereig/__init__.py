"""First Dirichlet eigenpair of the Finsler p-Laplacian on 2D domains,
shape derivatives of the eigenvalue, and a verification harness for the
associated identities (scaling, Faber-Krahn, Hadamard, Rellich-Pohozaev,
overdetermined boundary constancy)."""

from .anisotropy import (
    AnisotropyModel,
    EllipseNorm,
    EuclideanNorm,
    LqNorm,
    ModelError,
    RegularizedNorm,
    ellipticity_probe,
    parse_model,
    regularized_energy,
    wulff_area,
    wulff_polygon,
)
from .mesh import (
    Disk,
    Ellipse,
    MeshError,
    Polygon,
    Square,
    TriMesh,
    Wulff,
    generate,
    parse_shape,
    read_fmesh,
    refine,
    scale_mesh,
    transform,
    write_fmesh,
)
from .eigensolver import (
    EigenPair,
    SolverError,
    SolverOpts,
    energy,
    mass,
    solve_first,
    solve_pullback,
)
from .shapecalc import (
    DerivativeReport,
    NodalField,
    VectorField,
    d_lambda_fd,
    d_lambda_hadamard,
    d_lambda_volume,
    derivative_report,
    identity_field,
    normal_bump_field,
    parse_field,
    radial_bump_field,
    rellich_pohozaev_check,
    rotation_field,
    translation_field,
)

__version__ = "0.1.0"
