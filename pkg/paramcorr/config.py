"""Configuration file for paramcorr."""

DEFAULT_N_BINS = 10
"""Number of uniform separation bins on the normalised interval [0, 1]."""

DEFAULT_FIT_ALPHA = 0.05
"""Significance level for the Kolmogorov-Smirnov goodness-of-fit decision."""

DEFAULT_RANKTEST_ALPHA = 0.005
"""Significance level for catalog compatibility (0.5 percent)."""

DEFAULT_CONDITION_THRESHOLD = 1e12
"""Largest condition number of the rank-score covariance matrix before the
rank test refuses to solve against it."""

DEFAULT_N_PERMS = 9999
"""Number of label permutations for the Monte-Carlo rank test."""

MIN_N_PERMS = 99

CSV_FLOAT_FORMAT = "%.17g"
"""Float format for all CSV outputs (17 significant digits round-trips
IEEE doubles)."""

JSON_SCHEMA_VERSION = 1
"""Schema version stamped into every JSON output."""

GENERATOR_ID = "numpy.random.Philox4x64-10"
"""Identifier of the counter-based generator used for every random stream."""

OUTPUT_DIR_ENV_VAR = "PARAMCORR_OUTPUT_DIR"

DEFAULT_OUTPUT_DIR = "paramcorr_output"
