"""Domain types and the validated panel container consumed by every other module.

A panel is a collection of firm-year fundamentals plus per-market risk-free
rate series. Observations are validated field by field at construction; the
dataset is immutable afterwards and safe to share across workers.
"""

import math
from dataclasses import dataclass, field

from .errors import DuplicateKey, EmptyInput, InvariantViolation, MissingRiskFree

STAKE_SUM_TOL = 1e-9


@dataclass(frozen=True)
class FirmYearObservation:
    """One firm-year row of raw fundamentals.

    Monetary fields are per share where noted, otherwise in the dataset
    currency. ``controlling_stakes`` holds raw ownership fractions of all
    reported shareholders; thresholding happens downstream.
    ``book_value_prev`` optionally supplies the lagged book value for a
    firm's first panel year.
    """

    firm_id: str
    market_id: str
    year: int
    price: float
    book_value: float
    eps: float
    sga: float
    rd: float
    sales: float
    total_assets: float
    total_equity: float
    establishment_year: int
    controlling_stakes: tuple[float, ...] = ()
    book_value_prev: float | None = None


@dataclass(frozen=True)
class RiskFreeSeries:
    """Annual risk-free rates (10-year government bond yield) for one market."""

    market_id: str
    rates: dict[int, float]


@dataclass(frozen=True)
class DerivedRow:
    """Per-observation regression variables.

    ``marin_alt_log`` is ``None`` when marketing expense is non-positive; the
    row is then excluded from the log robustness variant only. ``price``,
    ``book_value`` and ``total_assets`` are carried through so reports and
    value models do not need to re-join the raw panel.
    """

    x_abnormal: float
    marin: float
    marin_alt_assets: float
    marin_alt_log: float | None
    age: float
    size: float
    lev: float
    ow: float
    beta: float
    pb_ratio: float
    price: float
    book_value: float
    total_assets: float


@dataclass(frozen=True)
class PanelDataset:
    """Validated panel keyed by (firm_id, year).

    Immutable after construction; balancedness is recorded, not required.
    """

    observations: dict[tuple[str, int], FirmYearObservation]
    risk_free: tuple[RiskFreeSeries, ...]
    years: tuple[int, ...]
    is_balanced: bool
    currency: str = "USD"
    _rates: dict[tuple[str, int], float] = field(default_factory=dict, repr=False)

    @property
    def firms(self) -> tuple[str, ...]:
        return tuple(sorted({f for f, _ in self.observations}))

    @property
    def markets(self) -> tuple[str, ...]:
        return tuple(sorted({o.market_id for o in self.observations.values()}))

    def rate(self, market_id: str, year: int) -> float:
        try:
            return self._rates[(market_id, year)]
        except KeyError:
            raise MissingRiskFree(f"no risk-free rate for market {market_id}, year {year}")

    def __len__(self) -> int:
        return len(self.observations)


def _check(condition: bool, field_name: str, reason: str, obs: FirmYearObservation) -> None:
    if not condition:
        raise InvariantViolation(field_name, reason, firm_id=obs.firm_id, year=obs.year)


def validate_observation(obs: FirmYearObservation) -> None:
    """Check every field-level invariant; raises :class:`InvariantViolation`.

    The error message identifies firm, year and the offending field.
    """
    numeric = {
        "price": obs.price,
        "book_value": obs.book_value,
        "eps": obs.eps,
        "sga": obs.sga,
        "rd": obs.rd,
        "sales": obs.sales,
        "total_assets": obs.total_assets,
        "total_equity": obs.total_equity,
    }
    for name, value in numeric.items():
        _check(isinstance(value, (int, float)) and math.isfinite(value),
               name, "not a finite number", obs)

    _check(obs.price > 0, "price", "price must be positive", obs)
    _check(obs.book_value > 0, "book_value", "book value must be positive", obs)
    _check(obs.total_assets > 0, "total_assets", "total assets must be positive", obs)
    _check(obs.sales > 0, "sales", "sales must be positive", obs)
    _check(obs.rd >= 0, "rd", "R&D must be non-negative", obs)
    _check(obs.sga - obs.rd >= 0, "rd", "SG&A minus R&D negative", obs)
    # leverage (equity/assets) must land in [0, 1]
    _check(obs.total_equity >= 0, "total_equity", "total equity must be non-negative", obs)
    _check(obs.total_equity <= obs.total_assets, "total_equity",
           "total equity exceeds total assets", obs)
    _check(obs.establishment_year <= obs.year, "establishment_year",
           "establishment year after observation year", obs)

    total = 0.0
    for s in obs.controlling_stakes:
        _check(isinstance(s, (int, float)) and math.isfinite(s), "stakes",
               "stake not a finite number", obs)
        _check(0 < s <= 1, "stakes", f"stake {s!r} outside (0, 1]", obs)
        total += s
    _check(total <= 1 + STAKE_SUM_TOL, "stakes", "stakes sum exceeds 1", obs)

    if obs.book_value_prev is not None:
        _check(math.isfinite(obs.book_value_prev) and obs.book_value_prev > 0,
               "book_value_2009", "lagged book value must be positive", obs)


def build_dataset(rows: list[FirmYearObservation],
                  rf: list[RiskFreeSeries],
                  currency: str = "USD") -> PanelDataset:
    """Assemble and validate a :class:`PanelDataset`.

    Deterministic and order-independent: permuting ``rows`` yields an
    identical dataset. Raises :class:`EmptyInput`, :class:`DuplicateKey`,
    :class:`MissingRiskFree` or :class:`InvariantViolation`.
    """
    if not rows:
        raise EmptyInput("no observations supplied")

    rates: dict[tuple[str, int], float] = {}
    for series in rf:
        for year, rate in series.rates.items():
            if not (0 <= rate <= 0.5):
                raise InvariantViolation("rate", f"rate {rate!r} outside [0, 0.5]",
                                         firm_id=series.market_id, year=year)
            rates[(series.market_id, year)] = rate

    observations: dict[tuple[str, int], FirmYearObservation] = {}
    for obs in rows:
        validate_observation(obs)
        key = (obs.firm_id, obs.year)
        if key in observations:
            raise DuplicateKey(f"duplicate observation for firm {obs.firm_id}, year {obs.year}")
        if (obs.market_id, obs.year) not in rates:
            raise MissingRiskFree(
                f"no risk-free rate for market {obs.market_id}, year {obs.year} "
                f"(firm {obs.firm_id})")
        observations[key] = obs

    ordered = {k: observations[k] for k in sorted(observations)}
    years = tuple(sorted({y for _, y in ordered}))
    firms = {f for f, _ in ordered}
    balanced = all((f, y) in ordered for f in firms for y in years)

    rf_sorted = tuple(sorted(rf, key=lambda s: s.market_id))
    return PanelDataset(observations=ordered, risk_free=rf_sorted, years=years,
                        is_balanced=balanced, currency=currency, _rates=rates)
