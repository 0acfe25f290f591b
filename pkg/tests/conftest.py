"""Shared builders for panel fixtures used across the test suite."""

import numpy as np
import pytest

from marketpanel.panel_core import FirmYearObservation, RiskFreeSeries, build_dataset


def make_observation(firm_id="F1", market_id="M1", year=2015, price=2.0,
                     book_value=1.5, eps=0.2, sga=12.0, rd=2.0, sales=40.0,
                     total_assets=100.0, total_equity=55.0,
                     establishment_year=2000, controlling_stakes=(0.30, 0.10),
                     book_value_prev=None):
    return FirmYearObservation(
        firm_id=firm_id, market_id=market_id, year=year, price=price,
        book_value=book_value, eps=eps, sga=sga, rd=rd, sales=sales,
        total_assets=total_assets, total_equity=total_equity,
        establishment_year=establishment_year,
        controlling_stakes=tuple(controlling_stakes),
        book_value_prev=book_value_prev)


def make_panel(n_firms=4, n_years=5, start_year=2011, seed=0, market_id="M1"):
    """A small valid panel with mildly varying fundamentals."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_firms):
        firm = f"F{i + 1}"
        for t in range(n_years):
            year = start_year + t
            rows.append(make_observation(
                firm_id=firm, market_id=market_id, year=year,
                price=float(1.0 + rng.uniform(0.2, 3.0)),
                book_value=float(0.5 + rng.uniform(0.1, 2.0)),
                eps=float(rng.normal(0.15, 0.05)),
                sga=float(10.0 + rng.uniform(0, 5)), rd=float(rng.uniform(0, 3)),
                sales=float(30.0 + rng.uniform(0, 20)),
                total_assets=float(80.0 + rng.uniform(0, 60)),
                total_equity=float(40.0 + rng.uniform(0, 30)),
                establishment_year=1990 + i,
                controlling_stakes=(0.25 + 0.02 * i, 0.08),
                book_value_prev=1.0 if t == 0 else None))
    rf = [RiskFreeSeries(market_id=market_id,
                         rates={start_year + t: 0.03 for t in range(n_years)})]
    return build_dataset(rows, rf)


@pytest.fixture
def small_panel():
    return make_panel()


def panel_design(n_firms=6, n_years=5, k=3, seed=0, beta=None, effect_sd=1.0,
                 noise_sd=1.0, effect_x_corr=0.0):
    """Random panel regression data with known slopes and entity effects.

    Returns (DesignMatrix, y, true_beta). ``effect_x_corr`` tilts the entity
    effects toward the firm means of the first regressor, which makes random
    effects inconsistent (the Hausman alternative).
    """
    from marketpanel.regress import DesignMatrix

    rng = np.random.default_rng(seed)
    if beta is None:
        beta = rng.normal(0, 1, k)
    beta = np.asarray(beta, dtype=float)
    n = n_firms * n_years
    x = rng.normal(0, 1, (n, k)) + np.repeat(rng.normal(0, 1, (n_firms, k)),
                                             n_years, axis=0)
    effects = rng.normal(0, effect_sd, n_firms)
    if effect_x_corr:
        xbar = x[:, 0].reshape(n_firms, n_years).mean(axis=1)
        effects = effects + effect_x_corr * xbar
    y = (x @ beta + np.repeat(effects, n_years)
         + rng.normal(0, noise_sd, n))
    index = tuple((f"F{i + 1}", 2000 + t) for i in range(n_firms)
                  for t in range(n_years))
    names = tuple(f"x{j + 1}" for j in range(k))
    return DesignMatrix(x, names, row_index=index), y, beta
