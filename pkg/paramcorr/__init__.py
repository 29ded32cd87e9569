from .data.catalog import (
    Catalog,
    GalaxyRecord,
    filter_mass_floor,
    load_catalog,
    merge_catalogs,
    select_redshift_bin,
)
from .data.transform import AxisTransformSpec, PointSet, to_point_set
from .data.randoms import RandomSpec, generate_randoms
from .correlation.paircounts import (
    BinGrid,
    PairCountHistogram,
    SeparationScale,
    cross_pair_counts,
    cross_pair_counts_accelerated,
    max_separation,
    normalize_counts,
)
from .correlation.estimators import CorrelationConfig, XiResult, bootstrap_errors, estimate_xi
from .stats.fitstats import fit_inverse_power_law, goodness_of_fit, ks_two_sample
from .stats.ranktest import RankTestInput, compatibility_table, rank_test
from .merger import MergerParams, invert_for_eta, merger_ratios
