"""Empirical tightness diagnostics.

Compacts in path space are described by a sup-norm bound plus finitely many
modulus-of-continuity constraints (an Arzela-Ascoli surrogate); probes use the
sigma-neighborhood form because sampled paths never sit exactly inside an
idealized compact.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError
from .operators import Operator, apply_values
from .pathspace import DriverEnsemble, PathEnsemble, prob_metric, ensemble_from_values, sup_norms
from .projective import CompactBox, clamp_values
from .rng import substream


def path_modulus(values: np.ndarray, dt: float, delta: float) -> np.ndarray:
    """Per-scenario mod_delta = max over node pairs with |t-s| <= delta of max-abs diff."""
    if delta < dt * (1 - 1e-12):
        raise ValueError(f"delta {delta} below grid resolution {dt}")
    g_max = int(np.floor(delta / dt + 1e-9))
    M = values.shape[0]
    mods = np.zeros(M)
    for g in range(1, g_max + 1):
        diff = np.max(np.abs(values[:, g:, :] - values[:, :-g, :]), axis=(1, 2))
        np.maximum(mods, diff, out=mods)
    return mods


@dataclass(frozen=True)
class ModulusRow:
    delta: float
    median: float
    q95: float


def modulus_report(y: PathEnsemble, deltas) -> list[ModulusRow]:
    """Per-delta median and 95th percentile of the path modulus over scenarios."""
    rows = []
    for delta in deltas:
        mods = path_modulus(y.values, y.grid.dt, float(delta))
        rows.append(ModulusRow(delta=float(delta),
                               median=float(np.median(mods)),
                               q95=float(np.quantile(mods, 0.95))))
    return rows


@dataclass(frozen=True)
class RegularityFit:
    """Log-log fit of second-moment increments E||y(t)-y(s)||^2 ~ C |t-s|^p."""

    pairs: np.ndarray            # [P, 2] columns (|t-s|, estimate)
    pair_se: np.ndarray          # [P] standard errors of the estimates
    fitted_exponent: float
    fitted_constant: float
    r2: float
    degenerate: bool = False


def kolmogorov_estimate(y: PathEnsemble, pair_count: int, seed: int) -> RegularityFit:
    """Second moments of increments over random node pairs, with a power-law fit.

    Degenerate inputs (all sampled increments zero) are flagged instead of
    fitted; the exponent is then NaN.
    """
    if pair_count < 2:
        raise ValueError("need pair_count >= 2")
    rng = substream(seed, 0)
    N = y.grid.N
    pairs = np.empty((pair_count, 2))
    ses = np.empty(pair_count)
    gaps = np.empty(pair_count)
    for p in range(pair_count):
        s = t = 0
        while s == t:
            s, t = rng.integers(0, N + 1, size=2)
        sq = np.sum((y.values[:, t, :] - y.values[:, s, :]) ** 2, axis=1)
        gaps[p] = abs(y.grid.nodes[t] - y.grid.nodes[s])
        pairs[p] = (gaps[p], sq.mean())
        ses[p] = sq.std() / np.sqrt(y.M)
    est = pairs[:, 1]
    if np.all(est <= 0.0):
        return RegularityFit(pairs=pairs, pair_se=ses, fitted_exponent=float("nan"),
                             fitted_constant=float("nan"), r2=float("nan"), degenerate=True)
    mask = est > 0
    lx, ly = np.log(pairs[mask, 0]), np.log(est[mask])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = ly - ly.mean()
    r2 = 1.0 - float(resid @ resid) / float(total @ total) if total.any() else 1.0
    return RegularityFit(pairs=pairs, pair_se=ses, fitted_exponent=float(slope),
                         fitted_constant=float(np.exp(intercept)), r2=r2)


@dataclass(frozen=True)
class TightnessReport:
    exceedance: float
    sigma: float
    compact_spec: tuple          # (sup bound R, ((delta, eta), ...))


def tight_set_probe(ys, R: float, modulus_pairs, sigma: float) -> TightnessReport:
    """Fraction of scenario paths outside the sigma-neighborhood of the compact.

    A path is inside if its sup norm is <= R + sigma and each modulus
    constraint holds up to sigma; the exceedance is the worst fraction outside
    across the supplied ensembles.
    """
    ys = list(ys)
    if not ys:
        raise ValueError("need at least one ensemble")
    worst = 0.0
    for y in ys:
        inside = sup_norms(y) <= R + sigma
        for delta, eta in modulus_pairs:
            inside &= path_modulus(y.values, y.grid.dt, float(delta)) <= eta + sigma
        worst = max(worst, float(np.mean(~inside)))
    return TightnessReport(exceedance=worst, sigma=float(sigma),
                           compact_spec=(float(R), tuple((float(a), float(b)) for a, b in modulus_pairs)))


def calibrate_compact(ys, deltas, quantile: float = 0.99) -> tuple[float, tuple]:
    """Quantile-calibrated compact spec (R, ((delta, eta), ...)) from sample ensembles."""
    ys = list(ys)
    if not ys:
        raise DegenerateDataError("cannot calibrate a compact from zero ensembles")
    sups = np.concatenate([sup_norms(y) for y in ys])
    R = float(np.quantile(sups, quantile))
    pairs = []
    for delta in deltas:
        mods = np.concatenate([path_modulus(y.values, y.grid.dt, float(delta)) for y in ys])
        pairs.append((float(delta), float(np.quantile(mods, quantile))))
    return R, tuple(pairs)


@dataclass(frozen=True)
class ContinuityRow:
    rho: float
    max_distance: float


def uniform_continuity_probe(op: Operator, box: CompactBox, rho_values, trials: int,
                             driver: DriverEnsemble, seed: int) -> list[ContinuityRow]:
    """Modulus-of-continuity table for the operator on in-box inputs.

    For each rho, draws pairs (u, v) inside the box with sup|u - v| <= rho
    almost surely (v = clamp(u + perturbation)) and records the largest
    observed output distance d_sup(h u, h v) over the trials.
    """
    rhos = sorted(float(r) for r in rho_values)
    if any(r <= 0 for r in rhos):
        raise ValueError("rho values must be positive")
    grid, M = driver.grid, driver.M
    d = box.lo.shape[1]
    center = (box.lo + box.hi) / 2.0
    half = (box.hi - box.lo) / 2.0
    rows = []
    for ri, rho in enumerate(rhos):
        worst = 0.0
        for trial in range(trials):
            rng = substream(seed, ri, trial)
            u = center[None, :, :] + half[None, :, :] * rng.uniform(-1.0, 1.0, (M, grid.N + 1, d))
            u = clamp_values(u, box)
            v = clamp_values(u + rho * rng.uniform(-1.0, 1.0, u.shape), box)
            du = ensemble_from_values(grid, apply_values(op, u, driver))
            dv = ensemble_from_values(grid, apply_values(op, v, driver))
            worst = max(worst, prob_metric(du, dv, "sup").value)
        rows.append(ContinuityRow(rho=rho, max_distance=worst))
    return rows
