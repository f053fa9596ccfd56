"""Random Cech / Vietoris-Rips complexes on the flat torus: isolated-face lab."""

from .geometry import (
    CECH,
    DOWN,
    RIPS,
    UP,
    ChartGuardError,
    RegionSpec,
    lens_volume,
    mc_region_volume,
    miniball_radius,
    nearest_image,
    region_contains,
    theta,
    torus_dist,
)
from .pointprocess import (
    GridIndex,
    PointSet,
    build_index,
    range_query,
    replicate_rng,
    sample_poisson,
)
from .complexes import ComplexSlice, enumerate_k_simplices, is_simplex, simplex_birth_radius
from .isolation import (
    ConnGraph,
    CountRecord,
    build_conn_graph,
    component_size_histogram,
    count_isolated,
    count_isolated_star,
    is_isolated,
)
from .asymptotics import (
    ConstantsEntry,
    RadiusSchedule,
    constants,
    estimate_A_volume,
    expected_J_mc,
    probe_separation,
    r_n_of_c,
    sample_A,
    solve_c_n,
)
from .experiments import GofReport, SweepConfig, poisson_gof, run_sweep, scaling_probe

__all__ = [
    "CECH",
    "RIPS",
    "UP",
    "DOWN",
    "ChartGuardError",
    "RegionSpec",
    "lens_volume",
    "mc_region_volume",
    "miniball_radius",
    "nearest_image",
    "region_contains",
    "theta",
    "torus_dist",
    "GridIndex",
    "PointSet",
    "build_index",
    "range_query",
    "replicate_rng",
    "sample_poisson",
    "ComplexSlice",
    "enumerate_k_simplices",
    "is_simplex",
    "simplex_birth_radius",
    "ConnGraph",
    "CountRecord",
    "build_conn_graph",
    "component_size_histogram",
    "count_isolated",
    "count_isolated_star",
    "is_isolated",
    "ConstantsEntry",
    "RadiusSchedule",
    "constants",
    "estimate_A_volume",
    "expected_J_mc",
    "probe_separation",
    "r_n_of_c",
    "sample_A",
    "solve_c_n",
    "GofReport",
    "SweepConfig",
    "poisson_gof",
    "run_sweep",
    "scaling_probe",
]

__version__ = "0.1.0"
