from hho_afem.model.density import (  # noqa
    Density,
    DensityParams,
    OptimalDesignDensity,
    PLaplaceDensity,
    TwoWellDensity,
    conjugate_numeric,
    optimal_design,
    plaplace,
    two_well,
    volume_fraction,
)
