"""Estimation core: OLS, the within (entity fixed-effects) estimator,
random-effects GLS, and covariance estimators.

All solvers go through a rank-revealing column-pivoted QR factorization with
tolerance 1e-10 * ||X||; raw normal equations exist only as a test oracle.
Inference uses the t distribution at all sample sizes.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

from .errors import (CollinearityProximityWarning, NegativeVarianceComponentWarning,
                     RankDeficient, SingletonGroupWarning, TooFewClusters,
                     TooFewObservations)

RANK_TOL_FACTOR = 1e-10
INTERCEPT_NAME = "C"


@dataclass(frozen=True)
class DesignMatrix:
    """An n x k regressor stack with named columns and an optional panel index.

    ``row_index`` holds (firm_id, year) per row and is required by the panel
    transformations and the period-clustered covariance.
    """

    values: np.ndarray
    column_names: tuple[str, ...]
    row_index: tuple[tuple[str, int], ...] | None = None

    def __post_init__(self):
        values = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if values.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        object.__setattr__(self, "values", values)
        names = tuple(self.column_names)
        object.__setattr__(self, "column_names", names)
        if len(names) != values.shape[1]:
            raise ValueError("column_names length does not match matrix width")
        if len(set(names)) != len(names):
            raise ValueError("column_names must be unique")
        if not np.all(np.isfinite(values)):
            bad = [names[j] for j in range(values.shape[1])
                   if not np.all(np.isfinite(values[:, j]))]
            raise ValueError(f"non-finite values in columns: {bad}")
        if self.row_index is not None:
            index = tuple((str(f), int(y)) for f, y in self.row_index)
            if len(index) != values.shape[0]:
                raise ValueError("row_index length does not match matrix height")
            object.__setattr__(self, "row_index", index)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]


@dataclass(frozen=True)
class FitResult:
    """Coefficients with covariance and fit statistics for one estimation."""

    coefficients: np.ndarray
    covariance: np.ndarray
    std_errors: np.ndarray
    t_stats: np.ndarray
    p_values: np.ndarray
    column_names: tuple[str, ...]
    r_squared: float
    r_squared_kind: str
    f_statistic: float
    f_pvalue: float
    nobs: int
    df_resid: int
    effects: str
    cov_kind: str
    residuals: np.ndarray
    entity_effects: dict[str, float] | None = None
    theta: float | None = None

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.column_names.index(name)])

    def std_error(self, name: str) -> float:
        return float(self.std_errors[self.column_names.index(name)])

    def p_value(self, name: str) -> float:
        return float(self.p_values[self.column_names.index(name)])


def _pivoted_qr_solve(values: np.ndarray, y: np.ndarray, names: tuple[str, ...]):
    """Least-squares solve via column-pivoted QR; returns (beta, xtx_inv).

    Raises :class:`RankDeficient` naming the dependent columns when the
    numerical rank falls short of the column count.
    """
    n, k = values.shape
    q, r, piv = scipy.linalg.qr(values, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = RANK_TOL_FACTOR * np.linalg.norm(values)
    rank = int(np.sum(diag > tol))
    if rank < k:
        dependent = [names[j] for j in piv[rank:]]
        raise RankDeficient(dependent)

    qty = q.T @ y
    beta_piv = scipy.linalg.solve_triangular(r, qty)
    beta = np.empty(k)
    beta[piv] = beta_piv

    r_inv = scipy.linalg.solve_triangular(r, np.eye(k))
    xtx_inv_piv = r_inv @ r_inv.T
    xtx_inv = np.empty((k, k))
    xtx_inv[np.ix_(piv, piv)] = xtx_inv_piv
    return beta, xtx_inv


def _t_inference(beta, covariance, df_resid):
    std = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(std > 0, beta / std, np.inf * np.sign(beta))
    t = np.where((std == 0) & (beta == 0), 0.0, t)
    p = 2.0 * stats.t.sf(np.abs(t), df_resid)
    return std, t, np.clip(p, 0.0, 1.0)


def _r_squared(y, residuals, centered: bool):
    rss = float(residuals @ residuals)
    if centered:
        dev = y - y.mean()
        tss = float(dev @ dev)
    else:
        tss = float(y @ y)
    if tss <= 0.0:
        return 1.0 if rss <= 1e-30 else 0.0
    return max(0.0, min(1.0, 1.0 - rss / tss))


def _f_statistic(r2, k_model, df_resid):
    if k_model <= 0 or df_resid <= 0:
        return 0.0, 1.0
    if r2 >= 1.0:
        return np.inf, 0.0
    f = (r2 / k_model) / ((1.0 - r2) / df_resid)
    return float(f), float(stats.f.sf(f, k_model, df_resid))


def ols_fit(X: DesignMatrix, y, intercept: bool = True) -> FitResult:
    """Ordinary least squares with classical covariance.

    The intercept column is prepended under the name ``"C"`` when requested.
    p-values are two-sided from the t distribution with ``n - k`` residual
    degrees of freedom.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != X.n:
        raise ValueError("y must be a vector matching the design matrix height")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")

    if intercept:
        values = np.column_stack([np.ones(X.n), X.values])
        names = (INTERCEPT_NAME,) + X.column_names
    else:
        values = X.values
        names = X.column_names

    n, k = values.shape
    if n <= k:
        raise TooFewObservations(f"n={n} observations for k={k} parameters")

    beta, xtx_inv = _pivoted_qr_solve(values, y, names)
    residuals = y - values @ beta
    df_resid = n - k
    sigma2 = float(residuals @ residuals) / df_resid
    covariance = sigma2 * xtx_inv
    covariance = (covariance + covariance.T) / 2.0

    std, t, p = _t_inference(beta, covariance, df_resid)
    r2 = _r_squared(y, residuals, centered=intercept)
    k_model = k - 1 if intercept else k
    f_stat, f_p = _f_statistic(r2, k_model, df_resid)

    return FitResult(coefficients=beta, covariance=covariance, std_errors=std,
                     t_stats=t, p_values=p, column_names=names,
                     r_squared=r2, r_squared_kind="ordinary",
                     f_statistic=f_stat, f_pvalue=f_p, nobs=n, df_resid=df_resid,
                     effects="none", cov_kind="classical", residuals=residuals)


def _group_slices(row_index):
    groups: dict[str, list[int]] = {}
    for i, (firm_id, _) in enumerate(row_index):
        groups.setdefault(firm_id, []).append(i)
    return groups


def within_transform(X: DesignMatrix, y, warn: bool = True) -> tuple[DesignMatrix, np.ndarray]:
    """Demean every column and y by its firm-group mean.

    Firms with a single row contribute zero within variation and trigger a
    :class:`SingletonGroupWarning` (suppressed with ``warn=False`` for
    internal re-transforms).
    """
    if X.row_index is None:
        raise ValueError("within transform requires a row_index")
    y = np.asarray(y, dtype=float)
    groups = _group_slices(X.row_index)
    singletons = [g for g, idx in groups.items() if len(idx) == 1]
    if singletons and warn:
        warnings.warn(f"groups with one row contribute no within variation: {singletons}",
                      SingletonGroupWarning, stacklevel=2)

    values = X.values.copy()
    y_out = y.copy()
    for idx in groups.values():
        idx = np.asarray(idx)
        values[idx] -= values[idx].mean(axis=0)
        y_out[idx] -= y_out[idx].mean()
    return DesignMatrix(values, X.column_names, X.row_index), y_out


def robust_cov_white_cross_section(X: DesignMatrix, residuals) -> np.ndarray:
    """Period-clustered sandwich covariance (White cross-section).

    (X'X)^-1 (sum_t X_t' e_t e_t' X_t) (X'X)^-1 with periods taken from the
    row index, scaled by n/(n - k). Robust to heteroskedasticity and to
    contemporaneous cross-firm correlation.
    """
    if X.row_index is None:
        raise ValueError("white cross-section covariance requires a row_index")
    residuals = np.asarray(residuals, dtype=float)
    n, k = X.values.shape
    periods: dict[int, list[int]] = {}
    for i, (_, year) in enumerate(X.row_index):
        periods.setdefault(year, []).append(i)
    if len(periods) < 2:
        raise TooFewClusters(f"need at least 2 periods, got {len(periods)}")

    xtx = X.values.T @ X.values
    bread = np.linalg.pinv(xtx)
    meat = np.zeros((k, k))
    for idx in periods.values():
        idx = np.asarray(idx)
        score = X.values[idx].T @ residuals[idx]
        meat += np.outer(score, score)
    cov = bread @ meat @ bread
    if n > k:
        cov *= n / (n - k)
    return (cov + cov.T) / 2.0


def _trend_collinearity_check(Xw: DesignMatrix):
    """Warn when a demeaned column is nearly a common linear trend."""
    years = np.array([y for _, y in Xw.row_index], dtype=float)
    trend = years.copy()
    for idx in _group_slices(Xw.row_index).values():
        idx = np.asarray(idx)
        trend[idx] -= trend[idx].mean()
    t_norm = np.linalg.norm(trend)
    if t_norm == 0:
        return
    for j, name in enumerate(Xw.column_names):
        col = Xw.values[:, j]
        c_norm = np.linalg.norm(col)
        if c_norm == 0:
            continue
        corr = abs(float(col @ trend)) / (c_norm * t_norm)
        if corr > 0.999:
            warnings.warn(
                f"column {name!r} is within-collinear with a common linear trend "
                f"(|corr|={corr:.6f}); estimable only because no time effects are included",
                CollinearityProximityWarning, stacklevel=3)


def fe_fit(X: DesignMatrix, y, cov_kind: str = "classical") -> FitResult:
    """Entity fixed-effects (within) estimator.

    OLS on firm-demeaned data; degrees of freedom are corrected for the
    estimated entity effects (df = n - k - G). The reported R-squared is the
    within R-squared. The intercept row ``"C"`` is the average effect
    ybar - xbar' beta. Recovered entity effects are attached to the result.
    """
    if cov_kind not in ("classical", "white_cross_section"):
        raise ValueError(f"unknown cov_kind {cov_kind!r}")
    y = np.asarray(y, dtype=float)
    Xw, yw = within_transform(X, y)
    _trend_collinearity_check(Xw)

    n, k = Xw.values.shape
    groups = _group_slices(Xw.row_index)
    g = len(groups)
    df_resid = n - k - g
    if df_resid <= 0:
        raise TooFewObservations(f"n={n}, k={k}, groups={g}: no residual degrees of freedom")

    beta, xtx_inv = _pivoted_qr_solve(Xw.values, yw, Xw.column_names)
    residuals = yw - Xw.values @ beta
    sigma2 = float(residuals @ residuals) / df_resid

    if cov_kind == "classical":
        slope_cov = sigma2 * xtx_inv
    else:
        slope_cov = robust_cov_white_cross_section(Xw, residuals)
    slope_cov = (slope_cov + slope_cov.T) / 2.0

    # average-effect intercept: C = ybar - xbar' beta; its grand-mean noise
    # term uses the classical sigma2 even under a robust slope covariance
    xbar = X.values.mean(axis=0)
    ybar = float(y.mean())
    const = ybar - float(xbar @ beta)
    v_xbar = slope_cov @ xbar
    covariance = np.empty((k + 1, k + 1))
    covariance[0, 0] = float(xbar @ v_xbar) + sigma2 / n
    covariance[0, 1:] = -v_xbar
    covariance[1:, 0] = -v_xbar
    covariance[1:, 1:] = slope_cov

    coefficients = np.concatenate([[const], beta])
    names = (INTERCEPT_NAME,) + Xw.column_names
    std, t, p = _t_inference(coefficients, covariance, df_resid)

    r2 = _r_squared(yw, residuals, centered=True)
    f_stat, f_p = _f_statistic(r2, k, df_resid)

    effects_by_firm = {}
    for firm_id, idx in groups.items():
        idx = np.asarray(idx)
        effects_by_firm[firm_id] = float(y[idx].mean() - X.values[idx].mean(axis=0) @ beta)

    return FitResult(coefficients=coefficients, covariance=covariance, std_errors=std,
                     t_stats=t, p_values=p, column_names=names,
                     r_squared=r2, r_squared_kind="within",
                     f_statistic=f_stat, f_pvalue=f_p, nobs=n, df_resid=df_resid,
                     effects="entity", cov_kind=cov_kind, residuals=residuals,
                     entity_effects=effects_by_firm)


def re_fit(X: DesignMatrix, y) -> FitResult:
    """Random-effects GLS with Swamy-Arora variance components.

    sigma2_e comes from the within residuals, sigma2_u from the between
    regression; a negative between component is clamped to zero with a
    warning, which reduces the estimator to pooled OLS.
    """
    if X.row_index is None:
        raise ValueError("random effects requires a row_index")
    y = np.asarray(y, dtype=float)
    n, k = X.values.shape
    groups = _group_slices(X.row_index)
    g = len(groups)

    # within step
    Xw, yw = within_transform(X, y, warn=False)
    beta_w, _ = _pivoted_qr_solve(Xw.values, yw, Xw.column_names)
    resid_w = yw - Xw.values @ beta_w
    df_within = n - k - g
    if df_within <= 0:
        raise TooFewObservations(f"n={n}, k={k}, groups={g}: within step has no df")
    sigma2_e = float(resid_w @ resid_w) / df_within

    # between step on group means
    group_ids = sorted(groups)
    xbar = np.vstack([X.values[groups[f]].mean(axis=0) for f in group_ids])
    ybar = np.array([y[groups[f]].mean() for f in group_ids])
    t_sizes = np.array([len(groups[f]) for f in group_ids], dtype=float)
    t_bar = n / g

    df_between = g - k - 1
    if df_between <= 0:
        warnings.warn("too few groups for the between regression; using theta = 0",
                      NegativeVarianceComponentWarning, stacklevel=2)
        sigma2_u = 0.0
    else:
        xb = np.column_stack([np.ones(g), xbar])
        beta_b, _ = _pivoted_qr_solve(xb, ybar, (INTERCEPT_NAME,) + X.column_names)
        resid_b = ybar - xb @ beta_b
        sigma2_b = float(resid_b @ resid_b) / df_between
        sigma2_u = sigma2_b - sigma2_e / t_bar
        if sigma2_u < 0:
            warnings.warn(f"negative between variance component ({sigma2_u:.3g}) clamped to 0",
                          NegativeVarianceComponentWarning, stacklevel=2)
            sigma2_u = 0.0

    theta_by_group = 1.0 - np.sqrt(sigma2_e / (sigma2_e + t_sizes * sigma2_u))

    # quasi-demeaning, intercept included
    values = np.column_stack([np.ones(n), X.values])
    names = (INTERCEPT_NAME,) + X.column_names
    y_star = y.copy()
    v_star = values.copy()
    for theta_i, firm_id in zip(theta_by_group, group_ids):
        idx = np.asarray(groups[firm_id])
        y_star[idx] -= theta_i * y[idx].mean()
        v_star[idx] -= theta_i * values[idx].mean(axis=0)

    kk = k + 1
    if n <= kk:
        raise TooFewObservations(f"n={n} observations for k={kk} parameters")
    beta, xtx_inv = _pivoted_qr_solve(v_star, y_star, names)
    resid_star = y_star - v_star @ beta
    df_resid = n - kk
    sigma2 = float(resid_star @ resid_star) / df_resid
    covariance = sigma2 * xtx_inv
    covariance = (covariance + covariance.T) / 2.0

    std, t, p = _t_inference(beta, covariance, df_resid)
    residuals = y - values @ beta
    r2 = _r_squared(y, residuals, centered=True)
    f_stat, f_p = _f_statistic(_r_squared(y_star, resid_star, centered=True), k, df_resid)

    return FitResult(coefficients=beta, covariance=covariance, std_errors=std,
                     t_stats=t, p_values=p, column_names=names,
                     r_squared=r2, r_squared_kind="overall",
                     f_statistic=f_stat, f_pvalue=f_p, nobs=n, df_resid=df_resid,
                     effects="random", cov_kind="classical", residuals=residuals,
                     theta=float(theta_by_group.mean()))


def normal_equations_oracle(X: DesignMatrix, y, intercept: bool = True) -> np.ndarray:
    """Test oracle: solve (X'X) beta = X'y directly. Not for production use."""
    y = np.asarray(y, dtype=float)
    values = X.values
    if intercept:
        values = np.column_stack([np.ones(X.n), values])
    xtx = values.T @ values
    xty = values.T @ y
    return np.linalg.solve(xtx, xty)
