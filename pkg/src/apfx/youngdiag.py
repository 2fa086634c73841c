"""Narrow-topology diagnostics: bounded test functionals evaluated along the
level sequence, reporting convergence of their expectations."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fixpoint import SchemeResult
from .pathspace import DriverEnsemble, PathEnsemble, TimeGrid
from .rng import substream


@dataclass(frozen=True)
class TestFunctional:
    """Bounded functional of (scenario path, scenario driver path).

    rule(values [M, N+1, d], w [M, N+1, d_w]) -> [M] array with entries in
    [-1, 1]; clipping is part of the rule.
    """

    name: str
    rule: Callable

    def __call__(self, values: np.ndarray, w: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(self.rule(values, w), dtype=float), -1.0, 1.0)


def _endpoint(values, w):
    return np.minimum(np.max(np.abs(values[:, -1, :]), axis=1), 1.0)


def _sup_norm(values, w):
    return np.minimum(np.max(np.abs(values), axis=(1, 2)), 1.0)


def _time_average(values, w):
    return np.clip(values[:, :, 0].mean(axis=1), -1.0, 1.0)


def _sin_linear(weights):
    def rule(values, w):
        return np.sin(np.einsum("mki,ki->m", values, weights))
    return rule


def _driver_coupled(node):
    def rule(values, w):
        return np.sin(values[:, node, 0] * w[:, node, 0])
    return rule


def test_battery(grid: TimeGrid, d: int, count: int, seed: int) -> list[TestFunctional]:
    """Deterministic battery of bounded test functionals.

    Always contains the five core kinds (clipped endpoint, clipped sup norm,
    clipped time average, sin of a seeded linear functional, a driver-coupled
    sin at a seeded node); count beyond five adds alternating seeded variants.
    """
    if count < 1:
        raise ValueError("need count >= 1")
    rng = substream(seed, 0)
    weights = rng.standard_normal((grid.N + 1, d))
    weights /= np.linalg.norm(weights)
    node = int(rng.integers(1, grid.N + 1))
    battery = [
        TestFunctional("endpoint_abs", _endpoint),
        TestFunctional("sup_norm", _sup_norm),
        TestFunctional("time_average", _time_average),
        TestFunctional("sin_linear_0", _sin_linear(weights)),
        TestFunctional(f"sin_driver_0_at_{node}", _driver_coupled(node)),
    ]
    for i in range(5, count):
        rng_i = substream(seed, i)
        if i % 2 == 1:
            w_i = rng_i.standard_normal((grid.N + 1, d))
            w_i /= np.linalg.norm(w_i)
            battery.append(TestFunctional(f"sin_linear_{i}", _sin_linear(w_i)))
        else:
            node_i = int(rng_i.integers(1, grid.N + 1))
            battery.append(TestFunctional(f"sin_driver_{i}_at_{node_i}", _driver_coupled(node_i)))
    return battery


@dataclass(frozen=True)
class NarrowRow:
    functional: str
    n: int
    estimate: float
    std_error: float
    diff: float | None  # |estimate - previous level estimate|, None for the first level


@dataclass(frozen=True)
class NarrowTable:
    rows: tuple[NarrowRow, ...]
    flags: dict  # functional name -> successive differences decreasing up to 1 inversion


def narrow_stats(result: SchemeResult, driver: DriverEnsemble, battery) -> NarrowTable:
    """Expectations E g(alpha_n) per functional and level, with successive differences.

    The summary flag per functional records whether the difference sequence is
    decreasing with at most one inversion: the computable shadow of narrow
    convergence of the level sequence.
    """
    battery = list(battery)
    if not battery:
        raise ValueError("battery must be nonempty")
    rows = []
    flags = {}
    for g in battery:
        prev = None
        diffs = []
        for n, alpha in zip(result.levels, result.alphas):
            vals = g(alpha.values, driver.paths)
            est = float(vals.mean())
            se = float(vals.std() / np.sqrt(alpha.M))
            diff = None if prev is None else abs(est - prev)
            if diff is not None:
                diffs.append(diff)
            rows.append(NarrowRow(g.name, n, est, se, diff))
            prev = est
        inversions = sum(1 for i in range(len(diffs) - 1) if diffs[i + 1] > diffs[i])
        flags[g.name] = inversions <= 1
    return NarrowTable(rows=tuple(rows), flags=flags)


@dataclass(frozen=True)
class WeakSummary:
    """Moment summary of one candidate solution ensemble."""

    node_mean: np.ndarray       # [N+1, d]
    node_mean_se: np.ndarray
    node_var: np.ndarray        # [N+1, d], ddof=1
    node_var_se: np.ndarray     # Gaussian approximation var * sqrt(2/(M-1))
    exceedance: tuple           # rows (R, P{sup|x| > R})


def weak_summary(alpha: PathEnsemble, driver: DriverEnsemble,
                 radii=(0.5, 1.0, 2.0, 4.0, 8.0, 1e18)) -> WeakSummary:
    if alpha.grid != driver.grid or alpha.M != driver.M:
        raise ValueError("ensemble and driver shapes differ")
    M = alpha.M
    mean = alpha.values.mean(axis=0)
    mean_se = alpha.values.std(axis=0) / np.sqrt(M)
    var = alpha.values.var(axis=0, ddof=1) if M > 1 else np.zeros_like(mean)
    var_se = var * np.sqrt(2.0 / max(M - 1, 1))
    sups = np.max(np.abs(alpha.values), axis=(1, 2))
    ladder = tuple((float(R), float(np.mean(sups > R))) for R in radii)
    return WeakSummary(node_mean=mean, node_mean_se=mean_se,
                       node_var=var, node_var_se=var_se, exceedance=ladder)
