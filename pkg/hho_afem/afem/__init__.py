from hho_afem.afem.benchmarks import (  # noqa
    BenchmarkConfig,
    benchmark,
    benchmark_library,
    lshape_mesh,
    square_mesh,
    twowell_mesh,
)
from hho_afem.afem.enums import ProblemId  # noqa
from hho_afem.afem.loop import (  # noqa
    ConvergenceRecord,
    convergence_rates,
    estimate_level,
    read_history,
    run_afem,
    write_csv,
)
from hho_afem.afem.marking import Extrapolation, aitken_extrapolate, dorfler_mark  # noqa
