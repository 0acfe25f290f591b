"""Diagnostic battery: ADF unit roots, Hausman specification test,
likelihood-ratio heteroskedasticity check, descriptive statistics and the
significance-annotated correlation matrix.

ADF critical values use the MacKinnon (2010) response surface for the
constant-only regression; approximate continuous p-values (MacKinnon 1994)
are used only inside the Fisher panel combination. Headline ADF p-values are
reported as interval brackets to avoid false precision.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import ConstantSeries, SpecMismatch, TooFewGroups, TooShort

# MacKinnon (2010) response-surface coefficients, constant-only regression,
# one variable: cv = b0 + b1/T + b2/T^2 + b3/T^3
_MACKINNON_CRIT = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.040),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}
# MacKinnon (1994) approximate asymptotic p-value surface, constant-only
_P_SMALL = (2.1659, 1.4412, 0.038269)     # tau <= tau_star
_P_LARGE = (1.7339, 0.93202, -0.12745, -0.010368)
_P_TAU_STAR = -1.61
_P_TAU_MIN = -18.83
_P_TAU_MAX = 2.74


@dataclass(frozen=True)
class TestResult:
    """A named diagnostic outcome.

    Exactly one of ``p_value`` / ``critical_values`` drives ``decision``;
    decisions are taken at the 5% level.
    """

    name: str
    statistic: float
    p_value: float | None
    critical_values: dict[str, float] | None
    decision: str  # "reject" | "fail_to_reject"
    detail: str = ""


@dataclass(frozen=True)
class VariableSummary:
    name: str
    n: int
    minimum: float
    maximum: float
    mean: float
    std: float | None
    flag: str = ""


@dataclass(frozen=True)
class CorrelationResult:
    """Pairwise Pearson correlations with two-sided p-values.

    Cells are NaN where a variable is constant or fewer than three complete
    pairs exist.
    """

    variables: tuple[str, ...]
    r: np.ndarray
    p: np.ndarray
    n: np.ndarray


@dataclass(frozen=True)
class StationarityRow:
    variable: str
    level: TestResult
    difference: TestResult | None
    order: str
    fisher: TestResult | None


def mackinnon_crit(nobs: int) -> dict[str, float]:
    """Finite-sample ADF critical values (constant-only regression)."""
    out = {}
    for level, (b0, b1, b2, b3) in _MACKINNON_CRIT.items():
        out[level] = b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3
    return out


def mackinnon_pvalue(stat: float) -> float:
    """Approximate asymptotic p-value for the constant-only ADF t statistic."""
    if stat <= _P_TAU_MIN:
        return 0.0
    if stat >= _P_TAU_MAX:
        return 1.0
    if stat <= _P_TAU_STAR:
        c = _P_SMALL
        z = c[0] + c[1] * stat + c[2] * stat**2
    else:
        c = _P_LARGE
        z = c[0] + c[1] * stat + c[2] * stat**2 + c[3] * stat**3
    return float(stats.norm.cdf(z))


def _pvalue_bracket(stat: float, crit: dict[str, float]) -> str:
    if stat < crit["1%"]:
        return "<0.01"
    if stat < crit["5%"]:
        return "<0.05"
    if stat < crit["10%"]:
        return "<0.10"
    return ">=0.10"


def _adf_stat(y: np.ndarray, lags: int) -> tuple[float, int]:
    """t statistic on the lagged level in the ADF regression with a constant."""
    dy = np.diff(y)
    t_start = lags + 1
    nobs = len(dy) - lags
    rows = np.arange(t_start, len(y))
    cols = [y[rows - 1]]
    for j in range(1, lags + 1):
        cols.append(dy[rows - 1 - j])
    cols.append(np.ones(nobs))
    X = np.column_stack(cols)
    beta, _, _, _ = np.linalg.lstsq(X, dy[rows - 1], rcond=None)
    resid = dy[rows - 1] - X @ beta
    df = nobs - X.shape[1]
    sigma2 = float(resid @ resid) / df
    xtx_inv = np.linalg.pinv(X.T @ X)
    se = math.sqrt(max(sigma2 * xtx_inv[0, 0], 0.0))
    if se == 0.0:
        raise ConstantSeries("degenerate ADF regression")
    return float(beta[0] / se), nobs


def _adf_aic_lag(y: np.ndarray, max_lags: int) -> int:
    """AIC lag choice on the common sample implied by ``max_lags``."""
    dy = np.diff(y)
    t_start = max_lags + 1
    rows = np.arange(t_start, len(y))
    nobs = len(rows)
    target = dy[rows - 1]
    best_lag, best_aic = 0, math.inf
    for p in range(max_lags + 1):
        cols = [y[rows - 1]]
        for j in range(1, p + 1):
            cols.append(dy[rows - 1 - j])
        cols.append(np.ones(nobs))
        X = np.column_stack(cols)
        beta, _, _, _ = np.linalg.lstsq(X, target, rcond=None)
        resid = target - X @ beta
        rss = float(resid @ resid)
        if rss <= 0:
            return p
        aic = nobs * math.log(rss / nobs) + 2 * (p + 2)
        if aic < best_aic - 1e-12:
            best_aic, best_lag = aic, p
    return best_lag


def adf_test(series, max_lags: int | None = None, min_length: int | None = None) -> TestResult:
    """Augmented Dickey-Fuller unit-root test with a constant.

    The lag count is chosen by AIC up to ``max_lags`` (default
    floor(12 * (T/100)^0.25)). The statistic is compared to MacKinnon
    finite-sample critical values; the decision is taken at 5%. p-values
    appear only as interval brackets in ``detail``.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    T = len(y)
    if max_lags is None:
        max_lags = int(math.floor(12.0 * (T / 100.0) ** 0.25))
        max_lags = max(0, min(max_lags, (T - 1) // 2 - 2))
    required = (20 + max_lags) if min_length is None else min_length
    if T < required:
        raise TooShort(f"series length {T} below required {required}")
    if float(np.std(y)) == 0.0:
        raise ConstantSeries("series has zero variance")

    lags = _adf_aic_lag(y, max_lags) if max_lags > 0 else 0
    stat, nobs = _adf_stat(y, lags)
    crit = mackinnon_crit(nobs)
    decision = "reject" if stat < crit["5%"] else "fail_to_reject"
    detail = (f"lags={lags}, nobs={nobs}, p-bracket={_pvalue_bracket(stat, crit)}, "
              f"approx_p={mackinnon_pvalue(stat):.4g}")
    return TestResult(name="adf", statistic=stat, p_value=None,
                      critical_values=crit, decision=decision, detail=detail)


def panel_stationarity(variable_panels: dict[str, list[np.ndarray]],
                       max_lags: int | None = None) -> list[StationarityRow]:
    """Unit-root battery per panel variable.

    For each variable the per-firm series are concatenated into a pooled
    series for a headline ADF statistic; a per-firm ADF (lag 0, relaxed
    length) combined by Fisher's method is reported alongside. Variables
    whose level test fails are retried in first differences and classified
    I(1) when the differenced test rejects.
    """
    out = []
    for name, series_list in variable_panels.items():
        pooled = np.concatenate([np.asarray(s, dtype=float) for s in series_list])
        level = adf_test(pooled, max_lags=max_lags)

        difference = None
        order = "I(0)"
        if level.decision != "reject":
            diffs = [np.diff(np.asarray(s, dtype=float)) for s in series_list
                     if len(s) >= 2]
            pooled_diff = np.concatenate(diffs)
            try:
                difference = adf_test(pooled_diff, max_lags=max_lags)
                order = "I(1)" if difference.decision == "reject" else "I(2+)"
            except (TooShort, ConstantSeries):
                order = "I(1?)"

        fisher = _fisher_combination(name, series_list)
        out.append(StationarityRow(variable=name, level=level, difference=difference,
                                   order=order, fisher=fisher))
    return out


def _fisher_combination(name: str, series_list) -> TestResult | None:
    """Combine per-firm ADF p-values: -2 sum(ln p_i) ~ chi2(2G).

    Per-firm series are short, so lag 0 is forced and the approximate
    MacKinnon p-values are used; the result is labelled approximate.
    """
    pvalues = []
    skipped = 0
    for s in series_list:
        s = np.asarray(s, dtype=float)
        if len(s) < 8 or float(np.std(s)) == 0.0:
            skipped += 1
            continue
        try:
            stat, _ = _adf_stat(s, 0)
        except ConstantSeries:
            skipped += 1
            continue
        pvalues.append(min(max(mackinnon_pvalue(stat), 1e-6), 1 - 1e-6))
    if not pvalues:
        return None
    statistic = -2.0 * float(np.sum(np.log(pvalues)))
    df = 2 * len(pvalues)
    p = float(stats.chi2.sf(statistic, df))
    decision = "reject" if p < 0.05 else "fail_to_reject"
    detail = (f"{name}: Fisher chi2({df}) over {len(pvalues)} firms "
              f"({skipped} skipped), approximate small-sample p-values")
    return TestResult(name="adf_fisher", statistic=statistic, p_value=p,
                      critical_values=None, decision=decision, detail=detail)


def hausman_test(fe, re) -> TestResult:
    """Hausman comparison of fixed- and random-effects slope vectors.

    H = d' (V_FE - V_RE)^+ d over the slope coefficients common to both
    fits (intercept excluded), df = rank of the covariance difference. A
    non-positive-semidefinite difference is flagged in ``detail`` and
    handled with the Moore-Penrose pseudo-inverse.
    """
    fe_slopes = [n for n in fe.column_names if n != "C"]
    re_slopes = [n for n in re.column_names if n != "C"]
    if set(fe_slopes) != set(re_slopes):
        raise SpecMismatch(f"regressor sets differ: {fe_slopes} vs {re_slopes}")
    names = fe_slopes

    fe_idx = [fe.column_names.index(n) for n in names]
    re_idx = [re.column_names.index(n) for n in names]
    d = fe.coefficients[fe_idx] - re.coefficients[re_idx]
    v_diff = (fe.covariance[np.ix_(fe_idx, fe_idx)]
              - re.covariance[np.ix_(re_idx, re_idx)])
    v_diff = (v_diff + v_diff.T) / 2.0

    eigvals = np.linalg.eigvalsh(v_diff)
    scale = max(abs(float(np.trace(v_diff))), 1e-300)
    psd = eigvals.min() >= -1e-10 * scale

    pinv = np.linalg.pinv(v_diff)
    statistic = float(d @ pinv @ d)
    df = int(np.linalg.matrix_rank(v_diff, tol=1e-12 * scale))
    df = max(df, 1)
    p = float(stats.chi2.sf(max(statistic, 0.0), df))
    decision = "reject" if p < 0.05 else "fail_to_reject"
    detail = f"df={df}, slopes={names}"
    if not psd:
        detail += "; covariance difference not PSD (pseudo-inverse used)"
    return TestResult(name="hausman", statistic=statistic, p_value=p,
                      critical_values=None, decision=decision, detail=detail)


def lr_heteroskedasticity(residuals, groups) -> TestResult:
    """Likelihood-ratio test of equal residual variances across firms.

    LR = n ln(sigma2_pooled) - sum_g n_g ln(sigma2_g), compared to
    chi-squared with G-1 degrees of freedom. Group variances are maximum
    likelihood second moments of the residuals.
    """
    residuals = np.asarray(residuals, dtype=float)
    labels = [g[0] if isinstance(g, tuple) else g for g in groups]
    if len(labels) != len(residuals):
        raise ValueError("groups must align with residuals")
    by_group: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        by_group.setdefault(label, []).append(i)
    if len(by_group) < 2:
        raise TooFewGroups(f"need at least 2 groups, got {len(by_group)}")
    small = [g for g, idx in by_group.items() if len(idx) < 3]
    if small:
        raise TooFewGroups(f"groups with fewer than 3 residuals: {small}")

    n = len(residuals)
    pooled = float(residuals @ residuals) / n
    g = len(by_group)
    if pooled == 0.0:
        statistic = 0.0
    else:
        statistic = n * math.log(pooled)
        degenerate = False
        for idx in by_group.values():
            e = residuals[np.asarray(idx)]
            s2 = float(e @ e) / len(e)
            if s2 == 0.0:
                degenerate = True
                break
            statistic -= len(e) * math.log(s2)
        if degenerate:
            statistic = math.inf
    df = g - 1
    p = float(stats.chi2.sf(statistic, df)) if math.isfinite(statistic) else 0.0
    decision = "reject" if p < 0.05 else "fail_to_reject"
    return TestResult(name="lr_heteroskedasticity", statistic=statistic, p_value=p,
                      critical_values=None, decision=decision,
                      detail=f"groups={g}, df={df}")


def descriptives(columns: dict[str, np.ndarray]) -> list[VariableSummary]:
    """Per-variable N, min, max, mean and sample standard deviation (n-1).

    NaNs are dropped per variable; a single observation reports no standard
    deviation and is flagged.
    """
    out = []
    for name, values in columns.items():
        v = np.asarray(values, dtype=float)
        v = v[np.isfinite(v)]
        if len(v) == 0:
            out.append(VariableSummary(name, 0, math.nan, math.nan, math.nan, None,
                                       flag="no observations"))
            continue
        std = float(np.std(v, ddof=1)) if len(v) > 1 else None
        flag = "" if len(v) > 1 else "single observation"
        out.append(VariableSummary(name=name, n=int(len(v)), minimum=float(v.min()),
                                   maximum=float(v.max()), mean=float(v.mean()),
                                   std=std, flag=flag))
    return out


def correlation_matrix(columns: dict[str, np.ndarray],
                       variables: tuple[str, ...] | None = None) -> CorrelationResult:
    """Pearson correlations with two-sided p-values, pairwise deletion.

    p comes from t = r sqrt((n-2)/(1-r^2)) with n-2 degrees of freedom.
    Constant variables (or pairs with fewer than 3 complete rows) report NaN.
    """
    names = tuple(variables) if variables is not None else tuple(columns)
    k = len(names)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    r = np.full((k, k), np.nan)
    p = np.full((k, k), np.nan)
    n_mat = np.zeros((k, k), dtype=int)

    for i in range(k):
        for j in range(i, k):
            mask = np.isfinite(data[i]) & np.isfinite(data[j])
            n = int(mask.sum())
            n_mat[i, j] = n_mat[j, i] = n
            if n < 3:
                continue
            x, yv = data[i][mask], data[j][mask]
            sx, sy = float(np.std(x)), float(np.std(yv))
            if sx == 0.0 or sy == 0.0:
                continue
            if i == j:
                r[i, i], p[i, i] = 1.0, 0.0
                continue
            rij = float(np.corrcoef(x, yv)[0, 1])
            rij = max(-1.0, min(1.0, rij))
            r[i, j] = r[j, i] = rij
            if abs(rij) >= 1.0:
                pij = 0.0
            else:
                t = rij * math.sqrt((n - 2) / (1.0 - rij * rij))
                pij = 2.0 * float(stats.t.sf(abs(t), n - 2))
            p[i, j] = p[j, i] = min(pij, 1.0)
    return CorrelationResult(variables=names, r=r, p=p, n=n_mat)
