"""Discretized adapted random paths: grids, Brownian drivers, the probability metric, i/o.

The sample space is represented by M independent scenarios.  The filtration at
node k is "everything computable from driver increments 0..k-1"; adaptedness of
path producers is a contract checked by `operators.adaptedness_check`, not
enforced structurally.
"""

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError
from .rng import substream

MAGIC = b"APFX"
FORMAT_VERSION = 1

NORMS = ("sup", "L1", "L2")


def _frozen(values, dtype=float) -> np.ndarray:
    """Return a read-only float64 C-order copy of `values` (no copy if already frozen)."""
    arr = np.asarray(values, dtype=dtype)
    if not arr.flags.c_contiguous:
        arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [a, b] with N steps, nodes[k] = a + k*(b-a)/N."""

    a: float
    b: float
    N: int
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"invalid range: need b > a, got [{self.a}, {self.b}]")
        if self.N < 1:
            raise ValueError(f"zero steps: need N >= 1, got N={self.N}")
        nodes = np.linspace(float(self.a), float(self.b), self.N + 1)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def dt(self) -> float:
        return (self.b - self.a) / self.N


def make_grid(a: float, b: float, N: int) -> TimeGrid:
    """Uniform time grid on [a, b] with N steps."""
    return TimeGrid(float(a), float(b), int(N))


@dataclass(frozen=True)
class DriverEnsemble:
    """M scenarios of a d_w-dimensional Brownian driver on a grid.

    increments[m, j] ~ N(0, dt) i.i.d. per coordinate; paths are the running
    sums with paths[m, 0] = 0.  Scenario m is drawn from the Philox stream
    keyed by (seed, m), so every entry is a pure function of (seed, m, j).
    """

    grid: TimeGrid
    M: int
    d_w: int
    seed: int
    increments: np.ndarray  # [M, N, d_w]
    paths: np.ndarray       # [M, N+1, d_w]

    def __post_init__(self):
        inc = _frozen(self.increments)
        paths = _frozen(self.paths)
        if inc.shape != (self.M, self.grid.N, self.d_w):
            raise ShapeMismatchError(f"increments shape {inc.shape} != {(self.M, self.grid.N, self.d_w)}")
        if paths.shape != (self.M, self.grid.N + 1, self.d_w):
            raise ShapeMismatchError(f"paths shape {paths.shape} != {(self.M, self.grid.N + 1, self.d_w)}")
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "paths", paths)


def sample_driver(grid: TimeGrid, M: int, d_w: int, seed: int) -> DriverEnsemble:
    """Draw M Brownian driver scenarios; deterministic in (grid, M, d_w, seed)."""
    if M < 1:
        raise ValueError(f"need M >= 1, got {M}")
    if d_w < 1:
        raise ValueError(f"need d_w >= 1, got {d_w}")
    inc = np.empty((M, grid.N, d_w))
    for m in range(M):
        inc[m] = substream(seed, m).standard_normal((grid.N, d_w))
    inc *= np.sqrt(grid.dt)
    return driver_from_increments(grid, inc, seed=seed)


def driver_from_increments(grid: TimeGrid, increments, seed: int = -1) -> DriverEnsemble:
    """Wrap explicit increments (e.g. spliced couplings) as a driver ensemble."""
    inc = np.asarray(increments, dtype=float)
    M = inc.shape[0]
    paths = np.zeros((M, grid.N + 1, inc.shape[2]))
    np.cumsum(inc, axis=1, out=paths[:, 1:, :])
    return DriverEnsemble(grid=grid, M=M, d_w=inc.shape[2], seed=seed,
                          increments=inc, paths=paths)


@dataclass(frozen=True)
class PathEnsemble:
    """An adapted random point candidate: M scenario paths of dimension d."""

    grid: TimeGrid
    M: int
    d: int
    values: np.ndarray  # [M, N+1, d]

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.M, self.grid.N + 1, self.d):
            raise ShapeMismatchError(f"values shape {vals.shape} != {(self.M, self.grid.N + 1, self.d)}")
        if not np.isfinite(vals).all():
            bad = np.argwhere(~np.isfinite(vals))[0]
            raise ValueError(f"non-finite path value at scenario={bad[0]}, node={bad[1]}, coord={bad[2]}")
        object.__setattr__(self, "values", vals)


def ensemble_from_values(grid: TimeGrid, values) -> PathEnsemble:
    vals = np.asarray(values, dtype=float)
    return PathEnsemble(grid=grid, M=vals.shape[0], d=vals.shape[2], values=vals)


def constant_ensemble(grid: TimeGrid, M: int, d: int, value) -> PathEnsemble:
    """Paths identically equal to `value` (scalar, [d], or per-scenario [M, d])."""
    vals = np.empty((M, grid.N + 1, d))
    v = np.asarray(value, dtype=float)
    if v.ndim <= 1:
        vals[...] = v.reshape(1, 1, -1) if v.ndim == 1 else v
    elif v.shape == (M, d):
        vals[...] = v[:, None, :]
    else:
        raise ShapeMismatchError(f"initial value shape {v.shape} not scalar, [d] or [M, d]")
    return ensemble_from_values(grid, vals)


def driver_as_ensemble(driver: DriverEnsemble) -> PathEnsemble:
    """View the driver paths themselves as a path ensemble."""
    return ensemble_from_values(driver.grid, driver.paths)


@dataclass(frozen=True)
class MetricEstimate:
    """Monte-Carlo estimate of d(x, y) = E min{rho(x, y), 1}."""

    value: float
    std_error: float
    M: int


def scenario_norms(diff: np.ndarray, norm: str, dt: float) -> np.ndarray:
    """Per-scenario path norm of a [M, N+1, d] difference array.

    sup = max over nodes and coordinates; L1/L2 are left-Riemann
    discretizations of the time integral with a Euclidean node norm.
    """
    if norm == "sup":
        return np.max(np.abs(diff), axis=(1, 2))
    node = np.sqrt(np.sum(diff * diff, axis=2))  # [M, N+1]
    if norm == "L1":
        return np.sum(node[:, :-1], axis=1) * dt
    if norm == "L2":
        return np.sqrt(np.sum(node[:, :-1] ** 2, axis=1) * dt)
    raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")


def check_same_shape(x: PathEnsemble, y: PathEnsemble):
    if x.grid != y.grid or x.M != y.M or x.d != y.d:
        raise ShapeMismatchError(
            f"ensembles differ: grid {x.grid} vs {y.grid}, M {x.M} vs {y.M}, d {x.d} vs {y.d}")


def prob_metric(x: PathEnsemble, y: PathEnsemble, norm: str = "sup") -> MetricEstimate:
    """Estimate d(x, y) = E min{||x - y||_norm, 1} over the scenario ensemble.

    The cap at 1 is applied per scenario, after the path norm.  std_error is
    the population standard deviation of the capped norms over sqrt(M), which
    keeps std_error <= 0.5/sqrt(M).
    """
    check_same_shape(x, y)
    capped = np.minimum(scenario_norms(x.values - y.values, norm, x.grid.dt), 1.0)
    return MetricEstimate(value=float(capped.mean()),
                          std_error=float(capped.std() / np.sqrt(x.M)),
                          M=x.M)


def sup_norms(x: PathEnsemble) -> np.ndarray:
    """Per-scenario sup norm max_{k,i} |x[m, k, i]|."""
    return np.max(np.abs(x.values), axis=(1, 2))


# -- serialization ------------------------------------------------------------
#
# Binary layout: magic "APFX", then little-endian uint32 version, M, N, d,
# then M*(N+1)*d row-major little-endian float64 values.  The header carries
# no time interval; the loader takes (a, b).

_HEADER = struct.Struct("<4sIIII")


def save_ensemble(x: PathEnsemble, path):
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, x.M, x.grid.N, x.d))
        f.write(np.ascontiguousarray(x.values, dtype="<f8").tobytes())


def load_ensemble(path, a: float, b: float) -> PathEnsemble:
    with open(path, "rb") as f:
        raw = f.read()
    magic, version, M, N, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}; not an ensemble file")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    vals = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(M, N + 1, d)
    return ensemble_from_values(make_grid(a, b, N), vals.astype(float))


def save_ensemble_csv(x: PathEnsemble, path):
    """Columns: scenario, node_index, time, value_0..value_{d-1}."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["scenario", "node_index", "time"] + [f"value_{i}" for i in range(x.d)])
        for m in range(x.M):
            for k in range(x.grid.N + 1):
                w.writerow([m, k, repr(float(x.grid.nodes[k]))]
                           + [repr(float(v)) for v in x.values[m, k]])


def load_ensemble_csv(path) -> PathEnsemble:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    d = len(header) - 3
    scenarios = sorted({int(r[0]) for r in body})
    nodes = sorted({int(r[1]) for r in body})
    M, N = len(scenarios), len(nodes) - 1
    vals = np.empty((M, N + 1, d))
    times = np.empty(N + 1)
    for r in body:
        m, k = int(r[0]), int(r[1])
        times[k] = float(r[2])
        vals[m, k] = [float(v) for v in r[3:]]
    return ensemble_from_values(make_grid(times[0], times[-1], N), vals)
