"""Multipath lifetime maps from geometric ray tracing over facet scenes."""

from .archive import ArchiveError, load_label_grid, load_registry, save_label_grid, save_registry
from .cells import (
    CellId,
    CellRegistry,
    GridSpec,
    LabelGrid,
    cell_id,
    color_of,
    connected_regions,
    label_grid,
    serialize_bits,
)
from .geometry import (
    Facet,
    NonManifoldError,
    Plane,
    Scene,
    build_accel,
    merge_coplanar_facets,
    mirror_point,
    point_in_facet,
    ray_facet_intersection,
    segment_occluded,
    vec3,
)
from .metrics import (
    CellMetrics,
    DistanceField,
    HammingStats,
    SweepReport,
    aggregate_sweep,
    avg_min_intercell_distance,
    cell_areas,
    disk_equivalent_radius,
    hamming_transition_stats,
    histogram,
    min_intercell_distance_field,
    snapshot_metrics,
)
from .render import RenderOptions, render_mlm
from .scenes import (
    CanyonParams,
    SceneFormatError,
    generate_canyon_2b,
    generate_canyon_6b,
    generate_fig2_scene,
    load_scene,
    save_scene,
)
from .sweep import SweepConfig, run_sweep, tx_positions
from .tracer import (
    BudgetExceededError,
    CandidateEnumeration,
    TracedPath,
    ValidityVector,
    candidate_count,
    enumerate_candidates,
    trace_candidate,
    validity_vector,
)

__version__ = "0.1.0"
