"""
Deterministic synthetic market for desk-scale experiments.

Returns follow a market + sector factor model with GARCH-style volatility
clustering. Each stock is also wired to planted ring neighbors: a neighbor's
shock enters the stock's return (weight spillover_strength) and a neighbor's
lagged squared shock enters its conditional variance, so neighbor volatility
today carries information about own volatility next week.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import pandas as pd

from errors import DataError
from models import BAR_FIELDS, GraphTag, MarketGraph, UniversePanel

logger = logging.getLogger(__name__)

# daily variance recursion: own ARCH, own GARCH, sector ARCH, neighbor ARCH (x spillover)
ARCH_OWN = 0.05
GARCH_OWN = 0.85
ARCH_SECTOR = 0.03
ARCH_NEIGHBOR = 0.06
DAILY_DRIFT = 0.0003


@dataclass(frozen=True)
class Regime:
    """Market regime starting at a fraction of the sample; scales vol and sets spreads (pct points)."""
    start_frac: float
    vol_scale: float = 1.0
    term_spread: float = 1.0
    credit_spread: float = 1.2


DEFAULT_REGIMES: Tuple[Regime, ...] = (
    Regime(0.0, vol_scale=1.0, term_spread=1.5, credit_spread=1.0),
    Regime(0.45, vol_scale=1.8, term_spread=0.3, credit_spread=2.2),
    Regime(0.55, vol_scale=1.0, term_spread=0.8, credit_spread=1.3),
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_stocks: int = 20
    n_days: int = 1500
    seed: int = 7
    spillover_strength: float = 0.5
    n_sectors: int = 4
    n_neighbors: int = 2
    start_date: str = "2015-01-05"
    regime_schedule: Tuple[Regime, ...] = field(default=DEFAULT_REGIMES)

    def validate(self) -> None:
        problems = []
        if self.n_stocks < 4:
            problems.append(f"n_stocks must be >= 4, got {self.n_stocks}")
        if self.n_days < 300:
            problems.append(f"n_days must be >= 300, got {self.n_days}")
        if not 0 <= self.spillover_strength <= 1:
            problems.append(f"spillover_strength must be in [0, 1], got {self.spillover_strength}")
        if not 1 <= self.n_sectors <= self.n_stocks:
            problems.append(f"n_sectors must be in [1, n_stocks], got {self.n_sectors}")
        if self.n_neighbors < 1 or self.n_neighbors % 2 or self.n_neighbors >= self.n_stocks:
            problems.append(f"n_neighbors must be even, >= 2 and < n_stocks, got {self.n_neighbors}")
        starts = [r.start_frac for r in self.regime_schedule]
        if not starts or starts[0] != 0.0 or starts != sorted(starts) or starts[-1] >= 1.0:
            problems.append("regime_schedule must start at 0.0 and be increasing within [0, 1)")
        if any(r.vol_scale <= 0 for r in self.regime_schedule):
            problems.append("regime vol_scale must be positive")
        if problems:
            raise DataError("invalid synthetic spec: " + "; ".join(problems))


def tickers_for(spec: SyntheticSpec) -> list[str]:
    return [f"SYN{i:03d}" for i in range(spec.n_stocks)]


def sector_of(spec: SyntheticSpec) -> np.ndarray:
    return np.arange(spec.n_stocks) % spec.n_sectors


def ring_neighbors(n_stocks: int, n_neighbors: int) -> np.ndarray:
    """Row-normalized ring adjacency: stock i listens to i +/- 1 .. n_neighbors/2."""
    adj = np.zeros((n_stocks, n_stocks))
    for i in range(n_stocks):
        for k in range(1, n_neighbors // 2 + 1):
            adj[i, (i + k) % n_stocks] = 1.0
            adj[i, (i - k) % n_stocks] = 1.0
    return adj / adj.sum(axis=1, keepdims=True)


def planted_graph(spec: SyntheticSpec) -> MarketGraph:
    """The true spillover graph behind synthesize_panel."""
    adj = ring_neighbors(spec.n_stocks, spec.n_neighbors)
    edges = tuple((i, j) for i in range(spec.n_stocks) for j in range(i + 1, spec.n_stocks) if adj[i, j] > 0)
    return MarketGraph(
        week=None,
        tickers=tuple(tickers_for(spec)),
        directed=False,
        edges=edges,
        tag=GraphTag.of("planted", neighbors=spec.n_neighbors),
    )


def regime_path(spec: SyntheticSpec, calendar: pd.DatetimeIndex) -> pd.DataFrame:
    """Per-day regime values (vol_scale, term_spread, credit_spread)."""
    starts = [int(round(r.start_frac * spec.n_days)) for r in spec.regime_schedule]
    idx = np.searchsorted(starts, np.arange(spec.n_days), side="right") - 1
    regimes = [spec.regime_schedule[i] for i in idx]
    return pd.DataFrame(
        {
            "vol_scale": [r.vol_scale for r in regimes],
            "term_spread": [r.term_spread for r in regimes],
            "credit_spread": [r.credit_spread for r in regimes],
        },
        index=calendar,
    )


def synthesize_panel(spec: SyntheticSpec) -> UniversePanel:
    """Generate an OHLCV panel; identical specs give bit-identical panels."""
    spec.validate()
    T, N, S = spec.n_days, spec.n_stocks, spec.n_sectors
    rng = np.random.default_rng(spec.seed)

    # Draw order is fixed so the panel depends on the seed alone.
    z_mkt = rng.standard_normal(T)
    z_sec = rng.standard_normal((T, S))
    z_idio = rng.standard_normal((T, N))
    volume_noise = rng.standard_normal((T, N))
    ohlc_noise = rng.standard_normal((T, N, 3))
    base_vol = rng.uniform(0.18, 0.40, N)
    beta_mkt = rng.uniform(0.2, 0.4, N)
    beta_sec = rng.uniform(0.2, 0.4, N)
    base_volume = rng.uniform(5e5, 5e6, N)
    first_close = rng.uniform(20.0, 200.0, N)

    sectors = sector_of(spec)
    neighbors = ring_neighbors(N, spec.n_neighbors)
    same_sector = (sectors[:, None] == sectors[None, :]).astype(float)
    same_sector /= same_sector.sum(axis=1, keepdims=True)
    spill = spec.spillover_strength

    # Unit-variance shocks mixed with neighbors' contemporaneous idiosyncratic shocks.
    norm = np.sqrt(beta_mkt**2 + beta_sec**2 + 1.0 + spill**2 / spec.n_neighbors)
    z = (beta_mkt * z_mkt[:, None] + beta_sec * z_sec[:, sectors] + z_idio + spill * z_idio @ neighbors.T) / norm

    target_var = base_vol**2 / 252.0
    persistence = ARCH_OWN + GARCH_OWN + ARCH_SECTOR + ARCH_NEIGHBOR * spill
    omega = target_var * (1.0 - persistence)

    h = np.empty((T, N))
    u = np.empty((T, N))
    h[0] = target_var
    u[0] = np.sqrt(h[0]) * z[0]
    for t in range(1, T):
        u2 = u[t - 1] ** 2
        h[t] = (
            omega
            + ARCH_OWN * u2
            + GARCH_OWN * h[t - 1]
            + ARCH_SECTOR * (same_sector @ u2)
            + ARCH_NEIGHBOR * spill * (neighbors @ u2)
        )
        u[t] = np.sqrt(h[t]) * z[t]

    calendar = pd.bdate_range(spec.start_date, periods=T)
    scale = regime_path(spec, calendar)["vol_scale"].to_numpy()[:, None]
    sigma = scale * np.sqrt(h)
    r = DAILY_DRIFT + scale * u
    r[0] = 0.0

    close = first_close * np.exp(np.cumsum(r, axis=0))
    prev_close = np.vstack([close[:1], close[:-1]])
    open_ = prev_close * np.exp(0.2 * sigma * ohlc_noise[:, :, 0])
    high = np.maximum(open_, close) * np.exp(0.5 * sigma * np.abs(ohlc_noise[:, :, 1]))
    low = np.minimum(open_, close) * np.exp(-0.5 * sigma * np.abs(ohlc_noise[:, :, 2]))
    shock_size = np.abs(u) / np.sqrt(target_var)
    volume = np.round(base_volume * np.exp(0.25 * volume_noise + 0.5 * (shock_size - 0.8)))

    tickers = tickers_for(spec)
    arrays = {"open": open_, "high": high, "low": low, "close": close, "volume": volume}
    bars = {f: pd.DataFrame(arrays[f], index=calendar, columns=tickers) for f in BAR_FIELDS}
    labels = {t: f"Sector-{sectors[i]:02d}" for i, t in enumerate(tickers)}
    sector_map = {year: dict(labels) for year in sorted({d.year for d in calendar})}

    logger.info(
        "Synthesized %d stocks x %d days (seed=%d, spillover=%.2f)", N, T, spec.seed, spec.spillover_strength
    )
    return UniversePanel(tickers=tickers, calendar=calendar, bars=bars, sector_map=sector_map)
