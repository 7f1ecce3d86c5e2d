from hho_afem.fem.bases import (  # noqa
    cell_basis,
    edge_basis,
    l2_project_cell,
    l2_project_edge,
    l2_project_rt,
    lagrange_basis,
    rt_basis,
)
from hho_afem.fem.estimate import (  # noqa
    BoundReport,
    ConformingPostprocess,
    StressField,
    discrete_stress,
    dual_energy,
    dual_energy_twowell,
    equilibrium_residual,
    grad_error,
    l2_error,
    leb_constant,
    lower_energy_bound,
    lp_norm,
    microstructure_fractions,
    normal_jumps,
    oscillation,
    postprocess_conforming,
    refinement_indicators,
    rhs_estimate,
    stress_error,
)
from hho_afem.fem.hho import (  # noqa
    EnergyFunctional,
    FidelityTerm,
    GradientField,
    HHOFunction,
    HHOSpace,
    discrete_energy,
    discrete_norm,
    energy_gradient,
    interpolate,
    reconstruct_gradient,
)
from hho_afem.fem.mesh import (  # noqa
    Mesh,
    build_mesh,
    read_mesh,
    refine_nvb,
    uniform_refine,
    write_mesh,
)
from hho_afem.fem.quadrature import QuadratureRule, quad_rule_edge, quad_rule_triangle  # noqa
from hho_afem.fem.solve import (  # noqa
    SolveReport,
    SolverConfig,
    initial_guess,
    minimize,
    prolongate,
)
