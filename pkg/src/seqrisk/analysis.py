"""Annotation analytics: multi-rater agreement, factor discrimination, co-occurrence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DEFAULT_CATALOG, FactorCatalog, RiskLevel

# Critical value for chi-square with 1 df at alpha = 0.05; used instead of a
# p-value computation so no special-function dependency is needed.
CHI2_CRITICAL_1DF_05 = 3.841

HIGH_RISK_LEVELS = (RiskLevel.BR, RiskLevel.AT)


class UndefinedResultError(ValueError):
    """The statistic is undefined for the given counts."""


def fleiss_kappa(counts) -> float:
    """Fleiss' kappa for n_items x n_categories rating counts.

    Every row must sum to the same rater count n >= 2. Perfect agreement with
    degenerate chance agreement (a single category ever used) returns 1.0 by
    convention; imperfect agreement with P_e == 1 cannot occur.
    """
    table = np.asarray(counts, dtype=float)
    if table.ndim != 2 or table.shape[0] < 1:
        raise ValueError("counts must be a 2-D matrix with at least one item")
    if np.any(table < 0) or np.any(table != np.floor(table)):
        raise ValueError("counts must be non-negative integers")
    row_sums = table.sum(axis=1)
    n = row_sums[0]
    if n < 2:
        raise ValueError("need at least 2 raters")
    if np.any(row_sums != n):
        raise ValueError("every item must have the same number of ratings")

    p_item = ((table * table).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_item.mean()
    p_cat = table.sum(axis=0) / table.sum()
    p_e = float((p_cat * p_cat).sum())
    if p_e >= 1.0 - 1e-12:
        if p_bar >= 1.0 - 1e-12:
            return 1.0
        raise UndefinedResultError("chance agreement is 1 but agreement is not perfect")
    return float((p_bar - p_e) / (1.0 - p_e))


def chi_square_2x2(table) -> tuple:
    """Pearson chi-square without continuity correction for a 2x2 table.

    Returns (chi2, significant) where significance is chi2 > 3.841 (df=1,
    alpha=0.05). Rows are factor present/absent, columns high/low risk group.
    """
    t = np.asarray(table, dtype=float)
    if t.shape != (2, 2) or np.any(t < 0):
        raise ValueError("expected a 2x2 table of non-negative counts")
    a, b = t[0]
    c, d = t[1]
    n = a + b + c + d
    if n < 1:
        raise ValueError("empty table")
    for name, m in (("row 1", a + b), ("row 2", c + d),
                    ("column 1", a + c), ("column 2", b + d)):
        if m == 0:
            raise UndefinedResultError(f"zero marginal: {name}")
    chi2 = n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))
    return float(chi2), bool(chi2 > CHI2_CRITICAL_1DF_05)


@dataclass
class DiscriminationRow:
    code: str
    kind: str  # "risk" or "protective"
    chi_square: float | None
    significant: bool | None

    @property
    def defined(self) -> bool:
        return self.chi_square is not None


def factor_discrimination(windows, catalog: FactorCatalog = DEFAULT_CATALOG) -> list:
    """Per-factor 2x2 chi-square of window factor presence vs target risk group.

    A factor counts as present when it appears in any observed post of the
    window; the group (high = BR/AT, low = IN/ID) is taken from the window's
    target level. Rows sort by descending chi-square with undefined rows
    (a zero marginal) flagged and placed last.
    """
    if not windows:
        raise ValueError("no windows to analyze")
    rows = []
    coded = [
        (set().union(*({c for c in p.risk_factors} | {c for c in p.protective_factors}
                       for p in w.observed)),
         w.target_level in HIGH_RISK_LEVELS)
        for w in windows
    ]
    for kind, codes in (("risk", catalog.risk_codes),
                        ("protective", catalog.protective_codes)):
        for code in codes:
            a = b = c = d = 0
            for present_codes, high in coded:
                present = code in present_codes
                if present and high:
                    a += 1
                elif present and not high:
                    b += 1
                elif high:
                    c += 1
                else:
                    d += 1
            try:
                chi2, sig = chi_square_2x2([[a, b], [c, d]])
            except UndefinedResultError:
                rows.append(DiscriminationRow(code, kind, None, None))
            else:
                rows.append(DiscriminationRow(code, kind, chi2, sig))
    rows.sort(key=lambda r: (-r.chi_square) if r.defined else np.inf)
    return rows


@dataclass
class CooccurrenceMatrix:
    """P[i][j] = fraction of users with risk factor i who also carry protective j.

    Counting unit is users (a factor counts if it appears in any of the user's
    posts). Rows for risk factors held by no user are NaN, not 0.
    """

    risk_codes: tuple
    protective_codes: tuple
    values: np.ndarray  # (M, K), NaN where undefined
    row_user_counts: np.ndarray  # (M,)

    def defined(self, i: int) -> bool:
        return self.row_user_counts[i] > 0


def cooccurrence(posts, catalog: FactorCatalog = DEFAULT_CATALOG) -> CooccurrenceMatrix:
    by_user_rf: dict = {}
    by_user_pf: dict = {}
    for p in posts:
        by_user_rf.setdefault(p.user_id, set()).update(p.risk_factors)
        by_user_pf.setdefault(p.user_id, set()).update(p.protective_factors)
    m, k = catalog.n_risk, catalog.n_protective
    values = np.full((m, k), np.nan)
    row_counts = np.zeros(m, dtype=int)
    for i, rf in enumerate(catalog.risk_codes):
        holders = [u for u, codes in by_user_rf.items() if rf in codes]
        row_counts[i] = len(holders)
        if not holders:
            continue
        for j, pf in enumerate(catalog.protective_codes):
            both = sum(1 for u in holders if pf in by_user_pf.get(u, ()))
            values[i, j] = both / len(holders)
    return CooccurrenceMatrix(
        risk_codes=catalog.risk_codes,
        protective_codes=catalog.protective_codes,
        values=values,
        row_user_counts=row_counts,
    )
