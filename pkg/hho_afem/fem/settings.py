QUADRATURE_MAX_DEGREE = 20
MAX_POLYNOMIAL_DEGREE = 4

GEOMETRY_TOLERANCE = 1e-12  # relative to squared side length

GRADIENT_TOLERANCE = 1e-12  # infinity norm of the energy gradient
STEP_TOLERANCE = 1e-14  # relative to the iterate norm
ENERGY_TOLERANCE = 1e-14  # relative to the energy
ARMIJO_PARAMETER = 1e-4
ARMIJO_MIN_STEP = 2.0**-40
REGULARIZATION_MIN = 1e-10  # smallest nonzero Levenberg factor
REGULARIZATION_MAX = 1e12
TRUST_SHRINK_RATIO = 0.25
TRUST_EXPAND_RATIO = 0.75

CONJUGATE_TOLERANCE = 1e-12
CONJUGATE_MAX_ITERATIONS = 200
CONJUGATE_ACCEPT_TOLERANCE = 1e-8  # gradient norm still accepted after the cap

CSV_COLUMNS = (
    "level",
    "ndof",
    "Eh",
    "Estar",
    "LEB",
    "RHS",
    "gap",
    "osc",
    "err_stress",
    "err_grad",
    "err_l2",
    "eta_sum",
    "iters",
    "seconds",
)
