"""Finite-dimensional Volterra approximations: piecewise-linear projection
onto anchor grids, a causal mollified variant, and box clamping.

All three maps respect prefixes at anchor nodes: two inputs agreeing on nodes
0..k (k an anchor index) produce outputs agreeing on 0..k bitwise.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivisibilityError, ShapeMismatchError
from .pathspace import MetricEstimate, PathEnsemble, TimeGrid, ensemble_from_values, prob_metric


@dataclass(frozen=True)
class ProjectionLevel:
    """Anchor grid with n+1 nodes a + k(b-a)/n, k = 0..n."""

    n: int
    anchor_nodes: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        anchors = np.asarray(self.anchor_nodes, dtype=float)
        if anchors.shape != (self.n + 1,):
            raise ShapeMismatchError(f"expected {self.n + 1} anchor nodes, got {anchors.shape}")
        anchors = anchors.copy()
        anchors.setflags(write=False)
        object.__setattr__(self, "anchor_nodes", anchors)


def make_level(grid: TimeGrid, n: int) -> ProjectionLevel:
    """Projection level with anchors k/n rescaled to [a, b]; n must divide N."""
    stride_for(grid, n)
    return ProjectionLevel(n=int(n), anchor_nodes=np.linspace(grid.a, grid.b, n + 1))


def stride_for(grid: TimeGrid, n: int) -> int:
    if n < 1 or grid.N % n != 0:
        raise DivisibilityError(f"level n={n} does not divide grid N={grid.N}")
    return grid.N // n


@dataclass(frozen=True)
class CompactBox:
    """Axis-aligned per-node box: lo[k, i] <= x[k, i] <= hi[k, i]."""

    lo: np.ndarray  # [N+1, d]
    hi: np.ndarray  # [N+1, d]

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise ShapeMismatchError(f"box bounds shapes {lo.shape}, {hi.shape}")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box needs lo <= hi everywhere")
        lo, hi = lo.copy(), hi.copy()
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @staticmethod
    def uniform(grid: TimeGrid, d: int, lo: float, hi: float) -> "CompactBox":
        shape = (grid.N + 1, d)
        return CompactBox(np.full(shape, float(lo)), np.full(shape, float(hi)))

    @staticmethod
    def around(center, radius: float, grid: TimeGrid, d: int) -> "CompactBox":
        """Box center +- radius per node; center is scalar, [d] or [N+1, d]."""
        c = np.broadcast_to(np.asarray(center, dtype=float), (grid.N + 1, d))
        return CompactBox(c - radius, c + radius)


def interp_values(values: np.ndarray, stride: int) -> np.ndarray:
    """Piecewise-linear interpolation through every stride-th node.

    Anchor nodes are copied bitwise; interior nodes are convex combinations of
    the two surrounding anchors.
    """
    if stride == 1:
        return values.copy()
    n_nodes = values.shape[1]
    idx = np.arange(n_nodes)
    seg = np.minimum(idx // stride, (n_nodes - 1) // stride - 1)
    left = seg * stride
    right = left + stride
    w = ((idx - left) / stride)[None, :, None]
    out = values[:, left, :] * (1.0 - w) + values[:, right, :] * w
    out[:, ::stride, :] = values[:, ::stride, :]
    return out


def volterra_interp(x: PathEnsemble, level: ProjectionLevel) -> PathEnsemble:
    """Project onto piecewise-linear paths with level.n anchor segments.

    Output on [anchor_k, anchor_{k+1}] depends only on the input at those two
    anchors, so outputs restricted to [a, anchor_k] depend only on the input
    restricted to [a, anchor_k].
    """
    stride = stride_for(x.grid, level.n)
    return ensemble_from_values(x.grid, interp_values(x.values, stride))


def mollifier_weights(stride: int, dt: float) -> np.ndarray:
    """Discrete tent kernel on lags 1..stride, unit discrete mass.

    weights[r-1] * dt summed over r equals 1; lag 0 is excluded so the
    smoother is strictly causal on the grid.
    """
    r = np.arange(1, stride + 1, dtype=float)
    w = np.minimum(r, stride + 1 - r)
    return w / (w.sum() * dt)


def mollify(x: PathEnsemble, level: ProjectionLevel) -> PathEnsemble:
    """Causal kernel smoothing of the interpolated path.

    (tau y)(t_k) = sum_{r=1..s} kernel(r) * y(t_{k-r}) * dt, applied to
    y = volterra_interp(x); the kernel support is (0, (b-a)/n].  Nodes with
    t < (b-a)/n see a truncated kernel mass.
    """
    stride = stride_for(x.grid, level.n)
    y = interp_values(x.values, stride)
    dt = x.grid.dt
    kern = mollifier_weights(stride, dt)
    out = np.zeros_like(y)
    for r in range(1, stride + 1):
        out[:, r:, :] += kern[r - 1] * y[:, :-r, :]
    out *= dt
    return ensemble_from_values(x.grid, out)


def clamp_values(values: np.ndarray, box: CompactBox) -> np.ndarray:
    return np.clip(values, box.lo[None, :, :], box.hi[None, :, :])


def clamp_box(x: PathEnsemble, box: CompactBox) -> PathEnsemble:
    """Entrywise clamp onto the box; idempotent, node-local, 1-Lipschitz."""
    if box.lo.shape != (x.grid.N + 1, x.d):
        raise ShapeMismatchError(f"box shape {box.lo.shape} != {(x.grid.N + 1, x.d)}")
    return ensemble_from_values(x.grid, clamp_values(x.values, box))


def property_pi_probe(x: PathEnsemble, levels) -> list[tuple[int, MetricEstimate]]:
    """Empirical strong-convergence table: rows (n, d_sup(pi_n x, x) estimate)."""
    return [(lvl.n, prob_metric(volterra_interp(x, lvl), x, "sup")) for lvl in levels]
