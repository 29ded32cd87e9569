"""Multivariate multisample rank test for a common parent distribution.

Observations of ``c`` groups are ranked per variable over the pooled sample,
ranks are turned into scores ``rank / (N + 1)``, and the statistic

    L_N = sum_k n_k (T_k - E) V^-1 (T_k - E)'

compares each group's mean score vector ``T_k`` with the pooled mean ``E``
through the score covariance ``V``. Its null distribution is approximated by a
scaled F distribution (McKeon) or estimated by permuting group labels.
"""

import itertools
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, stats
from tqdm import tqdm

from paramcorr.config import (
    DEFAULT_CONDITION_THRESHOLD,
    DEFAULT_N_PERMS,
    DEFAULT_RANKTEST_ALPHA,
    MIN_N_PERMS,
)
from paramcorr.data.catalog import AXES, Catalog
from paramcorr.data.utils import make_rng, replicate_seed
from paramcorr.errors import InapplicableApproximationError, SingularCovarianceError

METHODS = ("mckeon_f", "permutation")


class RankTestInput:
    """``c >= 2`` groups of ``p``-variate observations.

    Args:
        samples (Sequence[array-like]):
            One array of shape ``(n_k, p)`` per group (1-D arrays are read as
            ``p = 1``).
        labels (Sequence[str], optional):
            Group labels. Defaults to ``"group-0"``, ``"group-1"``, ...
        variables (Sequence[str], optional):
            Variable names. Defaults to ``"x1"``, ..., ``"xp"``.
    """

    def __init__(
        self,
        samples: Sequence,
        labels: Optional[Sequence[str]] = None,
        variables: Optional[Sequence[str]] = None,
    ):
        arrays = []
        for s in samples:
            s = np.asarray(s, dtype=float)
            if s.ndim == 1:
                s = s[:, None]
            arrays.append(s)
        if len(arrays) < 2:
            raise ValueError(f"Need at least 2 groups, got {len(arrays)}")
        p = arrays[0].shape[1]
        for k, s in enumerate(arrays):
            if s.ndim != 2 or s.shape[1] != p or p < 1:
                raise ValueError(f"Group {k} has shape {s.shape}, expected (n_k, {p})")
            if s.shape[0] == 0:
                raise ValueError(f"Group {k} is empty")
            if not np.all(np.isfinite(s)):
                raise ValueError(f"Group {k} has non-finite observations")
        self.samples = arrays
        self.labels = list(labels) if labels is not None else [f"group-{k}" for k in range(len(arrays))]
        self.variables = list(variables) if variables is not None else [f"x{i + 1}" for i in range(p)]
        if len(self.labels) != len(arrays) or len(self.variables) != p:
            raise ValueError("labels/variables do not match the samples")

    @classmethod
    def from_catalogs(cls, catalogs: Sequence[Catalog], variables: Sequence[str] = AXES) -> "RankTestInput":
        return cls([c.values(variables) for c in catalogs], [c.label for c in catalogs], variables)

    @property
    def c(self) -> int:
        return len(self.samples)

    @property
    def p(self) -> int:
        return self.samples[0].shape[1]

    @property
    def n_k(self) -> np.ndarray:
        return np.array([s.shape[0] for s in self.samples])

    @property
    def N(self) -> int:
        return int(self.n_k.sum())

    @property
    def pooled(self) -> np.ndarray:
        """Array of shape ``(N, p)`` with the groups stacked in order."""
        return np.concatenate(self.samples, axis=0)

    @property
    def groups(self) -> np.ndarray:
        """Group index of every pooled observation."""
        return np.repeat(np.arange(self.c), self.n_k)


@dataclass
class RankMatrix:
    ranks: np.ndarray
    """Array of shape ``(p, N)``; mid-ranks for ties."""
    n_ties: List[int]
    """Number of tied value groups per variable."""


@dataclass
class RankTestResult:
    statistic: float
    p_value: Optional[float] = None
    method: Optional[str] = None
    approx_params: Optional[dict] = None
    alpha: Optional[float] = None
    decision: Optional[str] = None
    n_perms: Optional[int] = None
    group_means: Optional[np.ndarray] = field(default=None, repr=False)
    global_mean: Optional[np.ndarray] = field(default=None, repr=False)
    V: Optional[np.ndarray] = field(default=None, repr=False)
    n_ties: Optional[List[int]] = None

    @property
    def reject(self) -> Optional[bool]:
        if self.decision is None:
            return None
        return self.decision == "Rejected"

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "approx_params": self.approx_params,
            "alpha": self.alpha,
            "decision": self.decision,
            "n_perms": self.n_perms,
            "n_ties": self.n_ties,
        }


def componentwise_ranks(inp: RankTestInput) -> RankMatrix:
    """Rank each variable over the pooled ``N`` observations (mid-ranks for ties)."""
    pooled = inp.pooled
    ranks = np.empty((inp.p, inp.N))
    n_ties = []
    for i in range(inp.p):
        ranks[i] = stats.rankdata(pooled[:, i], method="average")
        _, counts = np.unique(pooled[:, i], return_counts=True)
        n_ties.append(int((counts > 1).sum()))
    tied = [v for v, t in zip(inp.variables, n_ties) if t]
    if tied:
        warnings.warn(
            f"Ties in variables {tied}; using mid-ranks. The F approximation assumes "
            f"continuous data, the permutation p-value stays exact.",
            UserWarning,
        )
    return RankMatrix(ranks, n_ties)


def rank_scores(ranks) -> np.ndarray:
    """Scores ``rank / (N + 1)``, elementwise."""
    if isinstance(ranks, RankMatrix):
        ranks = ranks.ranks
    ranks = np.atleast_2d(np.asarray(ranks, dtype=float))
    return ranks / (ranks.shape[1] + 1)


def _degenerate_variables(V: np.ndarray, variables: Sequence[str]) -> List[str]:
    diag = np.diag(V)
    bad = {i for i in range(len(diag)) if diag[i] <= 0}
    ok = [i for i in range(len(diag)) if i not in bad]
    for i, j in itertools.combinations(ok, 2):
        corr = V[i, j] / np.sqrt(diag[i] * diag[j])
        if abs(corr) >= 1 - 1e-10:
            bad.update((i, j))
    if not bad:
        bad = set(range(len(diag)))
    return [variables[i] for i in sorted(bad)]


class _Statistic:
    """Pieces of ``L_N`` that do not change when group labels are permuted."""

    def __init__(self, inp: RankTestInput, condition_threshold: float = DEFAULT_CONDITION_THRESHOLD):
        self.inp = inp
        self.rank_matrix = componentwise_ranks(inp)
        N = inp.N
        # Mid-ranks keep the rank sum, so the pooled mean rank is (N + 1) / 2.
        self.centered = self.rank_matrix.ranks - (N + 1) / 2
        self.V = (self.centered @ self.centered.T) / N / (N + 1) ** 2
        cond = np.linalg.cond(self.V)
        if not np.isfinite(cond) or cond > condition_threshold:
            raise SingularCovarianceError(cond, _degenerate_variables(self.V, inp.variables))
        self.cho = linalg.cho_factor(self.V)

    def deviations(self, groups: np.ndarray) -> np.ndarray:
        """``T_k - E`` for every group, shape ``(p, c)``."""
        n_k = self.inp.n_k
        sums = np.stack(
            [self.centered[:, groups == k].sum(axis=1) for k in range(self.inp.c)], axis=1
        )
        return sums / n_k / (self.inp.N + 1)

    def value(self, groups: np.ndarray) -> float:
        D = self.deviations(groups)
        if not np.any(D):
            return 0.0
        solved = linalg.cho_solve(self.cho, D)
        return float(max(0.0, np.sum(self.inp.n_k * np.sum(D * solved, axis=0))))


def statistic_LN(
    inp: RankTestInput,
    condition_threshold: float = DEFAULT_CONDITION_THRESHOLD,
) -> RankTestResult:
    """Rank statistic ``L_N`` with its intermediates (no p-value).

    Raises:
        SingularCovarianceError: If the score covariance ``V`` has a condition
            number above ``condition_threshold``.
    """
    return _observed(_Statistic(inp, condition_threshold))


def _observed(st: _Statistic) -> RankTestResult:
    groups = st.inp.groups
    # Mean score of every variable is exactly 1/2, with or without mid-ranks
    global_mean = np.full(st.inp.p, 0.5)
    return RankTestResult(
        statistic=st.value(groups),
        group_means=st.deviations(groups) + global_mean[:, None],
        global_mean=global_mean,
        V=st.V,
        n_ties=st.rank_matrix.n_ties,
    )


def mckeon_pvalue(statistic: float, p: int, c_groups: int, N: int) -> Tuple[float, dict]:
    """Upper-tail p-value of ``L_N`` under the scaled F approximation.

    With ``m_H = c_groups - 1`` and ``m_E = N - c_groups``::

        a = p * m_H
        B = (m_E + m_H - p - 1) * (m_E - 1) / ((m_E - p - 3) * (m_E - p))
        b = 4 + (a + 2) / (B - 1)
        scale_c = a * (b - 2) / (b * (m_E - p - 1))

    and ``L_N / (m_E * scale_c)`` is referred to ``F(a, b)``.

    Returns:
        Tuple of the p-value and the approximation parameters.

    Raises:
        InapplicableApproximationError: If ``m_E - p - 3 <= 0``,
            ``m_E - p - 1 <= 0`` or ``B <= 1``.
    """
    m_H = c_groups - 1
    m_E = N - c_groups
    if m_H < 1 or p < 1:
        raise InapplicableApproximationError(f"need c_groups >= 2 and p >= 1, got {c_groups}, {p}")
    if m_E - p - 3 <= 0 or m_E - p - 1 <= 0:
        raise InapplicableApproximationError(
            f"m_E - p - 3 = {m_E - p - 3} must be positive (N={N}, p={p}, c={c_groups})"
        )
    a = p * m_H
    B = (m_E + m_H - p - 1) * (m_E - 1) / ((m_E - p - 3) * (m_E - p))
    if B <= 1:
        raise InapplicableApproximationError(f"B = {B} must exceed 1")
    b = 4 + (a + 2) / (B - 1)
    scale_c = a * (b - 2) / (b * (m_E - p - 1))
    params = {"m_H": m_H, "m_E": m_E, "B": B, "a": a, "b": b, "scale_c": scale_c}
    p_value = 1.0 if statistic <= 0 else float(stats.f.sf(statistic / (m_E * scale_c), a, b))
    return p_value, params


def permutation_pvalue(
    inp: RankTestInput,
    n_perms: int = DEFAULT_N_PERMS,
    seed: int = 0,
    condition_threshold: float = DEFAULT_CONDITION_THRESHOLD,
    progress_bar: bool = False,
) -> RankTestResult:
    """Monte-Carlo permutation p-value of ``L_N``.

    Group labels are permuted over the pooled observations; ranks and ``V``
    do not change under relabelling, so only the group means are recomputed.
    Permutation ``i`` draws from a stream derived from ``(seed, i)``.
    ``p = (1 + #{L_perm >= L_obs}) / (1 + n_perms)``.

    Raises:
        ValueError: If ``n_perms < 99``.
        SingularCovarianceError: As :func:`statistic_LN`.
    """
    if int(n_perms) < MIN_N_PERMS:
        raise ValueError(f"n_perms must be >= {MIN_N_PERMS}, got {n_perms}")
    st = _Statistic(inp, condition_threshold)
    result = _observed(st)
    groups = inp.groups
    observed = result.statistic
    n_ge = 0
    for i in tqdm(range(int(n_perms)), disable=not progress_bar, desc="permutations"):
        perm = make_rng(replicate_seed(seed, i)).permutation(groups)
        if st.value(perm) >= observed * (1 - 1e-12):
            n_ge += 1
    return replace(
        result,
        p_value=(1 + n_ge) / (1 + int(n_perms)),
        method="permutation",
        n_perms=int(n_perms),
        approx_params={"seed": int(seed), "n_ge": n_ge},
    )


def mckeon_test(
    inp: RankTestInput, condition_threshold: float = DEFAULT_CONDITION_THRESHOLD
) -> RankTestResult:
    result = statistic_LN(inp, condition_threshold)
    p_value, params = mckeon_pvalue(result.statistic, inp.p, inp.c, inp.N)
    return replace(result, p_value=p_value, method="mckeon_f", approx_params=params)


def compatibility_decision(result: RankTestResult, alpha: float = DEFAULT_RANKTEST_ALPHA) -> RankTestResult:
    """Reject a common parent distribution iff ``p_value < alpha``.

    Returns:
        :class:`RankTestResult`: Copy carrying ``alpha`` and the decision
        (``"Accepted"`` or ``"Rejected"``).
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if result.p_value is None:
        raise ValueError("Result has no p-value; run mckeon_test or permutation_pvalue first")
    decision = "Rejected" if result.p_value < alpha else "Accepted"
    return replace(result, alpha=alpha, decision=decision)


def rank_test(
    inp: RankTestInput,
    method: str = "auto",
    alpha: float = DEFAULT_RANKTEST_ALPHA,
    n_perms: int = DEFAULT_N_PERMS,
    seed: int = 0,
    condition_threshold: float = DEFAULT_CONDITION_THRESHOLD,
    progress_bar: bool = False,
) -> RankTestResult:
    """Run the rank test and decide at ``alpha``.

    ``method`` is ``"mckeon_f"``, ``"permutation"`` or ``"auto"`` (McKeon where
    the approximation applies, otherwise permutation).
    """
    if method not in (*METHODS, "auto"):
        raise ValueError(f"method must be one of {METHODS + ('auto',)}, got '{method}'")
    if method in ("mckeon_f", "auto"):
        try:
            result = mckeon_test(inp, condition_threshold)
        except InapplicableApproximationError:
            if method == "mckeon_f":
                raise
            warnings.warn("F approximation not applicable; using permutations.", UserWarning)
            result = permutation_pvalue(inp, n_perms, seed, condition_threshold, progress_bar)
    else:
        result = permutation_pvalue(inp, n_perms, seed, condition_threshold, progress_bar)
    return compatibility_decision(result, alpha)


def compatibility_table(
    catalogs: Sequence[Catalog],
    reference: Optional[str] = None,
    design: str = "reference",
    variables: Sequence[str] = AXES,
    method: str = "auto",
    alpha: float = DEFAULT_RANKTEST_ALPHA,
    n_perms: int = DEFAULT_N_PERMS,
    seed: int = 0,
    verbose: bool = False,
) -> pd.DataFrame:
    """Two-sample compatibility tests between catalogs.

    Args:
        catalogs (Sequence[:class:`~.data.catalog.Catalog`]):
            Catalogs to compare.
        reference (str, optional):
            Label of the reference catalog for ``design="reference"``.
            Defaults to the first catalog.
        design (str, optional):
            ``"reference"`` (reference against every other catalog) or
            ``"pairwise"`` (every unordered pair). Defaults to ``"reference"``.
        variables (Sequence[str], optional):
            Catalog columns to test. Defaults to mass and size.
        method, alpha, n_perms:
            As :func:`rank_test`.
        seed (int, optional):
            Row ``i`` uses permutation seed ``replicate_seed(seed, i)``.

    Returns:
        :class:`pandas.DataFrame` with columns ``sample1, sample2, p_value,
        decision, statistic, method, alpha``.
    """
    by_label = {c.label: c for c in catalogs}
    if len(by_label) != len(catalogs):
        raise ValueError("Catalog labels must be unique")
    if design == "reference":
        ref = reference if reference is not None else catalogs[0].label
        if ref not in by_label:
            raise ValueError(f"Reference catalog '{ref}' not among {list(by_label)}")
        pairs = [(ref, c.label) for c in catalogs if c.label != ref]
    elif design == "pairwise":
        pairs = list(itertools.combinations([c.label for c in catalogs], 2))
    else:
        raise ValueError(f"design must be 'reference' or 'pairwise', got '{design}'")

    rows = []
    for i, (l1, l2) in enumerate(pairs):
        inp = RankTestInput.from_catalogs([by_label[l1], by_label[l2]], variables)
        res = rank_test(inp, method, alpha, n_perms, replicate_seed(seed, i))
        if verbose:
            print(f"{l1} vs {l2}: L_N={res.statistic:.4g}, p={res.p_value:.4g} ({res.decision})")
        rows.append(
            {
                "sample1": l1,
                "sample2": l2,
                "p_value": res.p_value,
                "decision": res.decision,
                "statistic": res.statistic,
                "method": res.method,
                "alpha": alpha,
            }
        )
    return pd.DataFrame(
        rows, columns=["sample1", "sample2", "p_value", "decision", "statistic", "method", "alpha"]
    )
