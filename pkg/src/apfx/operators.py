"""Local operators on path ensembles: superpositions, Lebesgue and Ito
integrals, clamping/interpolation wrappers, chains and sums, plus empirical
harnesses for locality and adaptedness.

Operators act scenario-wise (output scenario m is a function of input scenario
m and driver scenario m only) and are pure, so locality and adaptedness can be
checked bitwise.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, OperatorEvalError, ShapeMismatchError
from .pathspace import DriverEnsemble, PathEnsemble, TimeGrid, driver_from_increments, ensemble_from_values
from .projective import CompactBox, ProjectionLevel, clamp_values, interp_values, stride_for
from .rng import substream

STRICT = "strictly_causal"
CAUSAL = "causal"
UNKNOWN = "unknown"

KINDS = ("superposition", "lebesgue", "ito", "clamp", "interp",
         "composite", "sum", "constant", "custom")


@dataclass(frozen=True)
class Coefficient:
    """Pointwise coefficient f(t, x, W(t)) evaluated on whole ensembles.

    fn(t, x, w) -> [M, N+1, d_out] with t shaped [1, N+1, 1], x the state
    values [M, N+1, d] and w the driver paths [M, N+1, d_w].  The rule must
    read w only pointwise in the node (or at earlier nodes), which keeps the
    generated superposition adapted; `adaptedness_check` verifies this.
    """

    name: str
    fn: Callable
    bound: float | None = None
    growth: str | None = None  # e.g. "bounded", "linear"
    pointwise: bool = True     # rule reads (t, x, w) at the current node only;
                               # set False if it reads earlier nodes, which
                               # disables single-pass solver evaluation


@dataclass(frozen=True)
class Operator:
    """Descriptor of a local operator, applied via `apply`."""

    kind: str
    causality: str = UNKNOWN
    parts: tuple = ()
    coefficient: Coefficient | None = None
    box: CompactBox | None = None
    level: ProjectionLevel | None = None
    column: int | None = None
    value: object = None            # constant kind: scalar, [d] or [M, d]
    fn: Callable | None = None      # custom kind: fn(values, driver) -> values
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.causality not in (STRICT, CAUSAL, UNKNOWN):
            raise ValueError(f"unknown causality {self.causality!r}")


def _combined_causality(parts, chain: bool) -> str:
    tags = [p.causality for p in parts]
    if any(t == UNKNOWN for t in tags):
        return UNKNOWN
    if chain:
        return STRICT if any(t == STRICT for t in tags) else CAUSAL
    return STRICT if all(t == STRICT for t in tags) else CAUSAL


def superposition(f: Coefficient) -> Operator:
    """(h x)[m, k] = f(t_k, x[m, k], W[m, k]); causal, local by construction."""
    return Operator(kind="superposition", causality=CAUSAL, coefficient=f,
                    name=f"superposition({f.name})")


def lebesgue_integral() -> Operator:
    """(h x)[m, k] = sum_{j<k} x[m, j] dt; left-Riemann, strictly causal."""
    return Operator(kind="lebesgue", causality=STRICT, name="lebesgue")


def ito_integral(column: int | None = None) -> Operator:
    """(h x)[m, k] = sum_{j<k} x[m, j] * dW[m, j]; left-point rule.

    column=None pairs integrand coordinates with driver coordinates (d == d_w,
    or a single driver column broadcast when d_w == 1); column=j integrates
    every coordinate against driver column j.
    """
    return Operator(kind="ito", causality=STRICT, column=column,
                    name=f"ito(col={column})" if column is not None else "ito")


def clamp_operator(box: CompactBox) -> Operator:
    return Operator(kind="clamp", causality=CAUSAL, box=box, name="clamp")


def interp_operator(level: ProjectionLevel, grid_steps: int | None = None) -> Operator:
    """Piecewise-linear projection as an operator.

    With grid_steps == level.n the map is the identity on grid nodes and is
    tagged causal; coarser levels read the segment's right anchor, which is
    ahead of interior nodes, so the tag is `unknown` (no forward substitution
    through it).
    """
    tag = CAUSAL if grid_steps is not None and grid_steps == level.n else UNKNOWN
    return Operator(kind="interp", causality=tag, level=level, name=f"interp(n={level.n})")


def compose(*parts: Operator) -> Operator:
    """Chain composition; the rightmost operator is applied first."""
    return Operator(kind="composite", causality=_combined_causality(parts, chain=True),
                    parts=tuple(parts), name="(" + " . ".join(p.name for p in parts) + ")")


def operator_sum(*parts: Operator) -> Operator:
    """Pointwise sum of operators applied to the same input."""
    return Operator(kind="sum", causality=_combined_causality(parts, chain=False),
                    parts=tuple(parts), name="(" + " + ".join(p.name for p in parts) + ")")


def constant_operator(value) -> Operator:
    """Operator ignoring its input: output identically `value` (per scenario).

    Reads no input nodes at all, hence vacuously strictly causal.
    """
    v = np.asarray(value, dtype=float)
    return Operator(kind="constant", causality=STRICT, value=v, name="constant")


def custom_operator(fn: Callable, causality: str = UNKNOWN, name: str = "custom") -> Operator:
    """Wrap fn(values [M, N+1, d], driver) -> values as an operator."""
    return Operator(kind="custom", causality=causality, fn=fn, name=name)


def identity_operator() -> Operator:
    return custom_operator(lambda values, driver: values.copy(), causality=CAUSAL, name="identity")


# -- application ---------------------------------------------------------------

def _superposition_values(coeff: Coefficient, grid: TimeGrid, values, driver) -> np.ndarray:
    t = grid.nodes.reshape(1, -1, 1)
    try:
        out = coeff.fn(t, values, driver.paths)
    except Exception as exc:  # noqa: BLE001 - re-raise with operator context
        raise OperatorEvalError(f"coefficient {coeff.name!r} raised {exc!r}") from exc
    out = np.asarray(out, dtype=float)
    if out.ndim == 2:
        out = out[:, :, None]
    if out.shape[:2] != values.shape[:2]:
        raise DimensionMismatchError(
            f"coefficient {coeff.name!r} returned shape {out.shape} for input {values.shape}")
    if not np.isfinite(out).all():
        m, k = np.argwhere(~np.isfinite(out))[0][:2]
        raise OperatorEvalError(f"coefficient {coeff.name!r} produced non-finite value",
                                scenario=int(m), node=int(k))
    return out


def _left_cumsum(contrib: np.ndarray) -> np.ndarray:
    """y[k] = sum_{j<k} contrib[j]; y[0] = 0."""
    out = np.zeros((contrib.shape[0], contrib.shape[1] + 1, contrib.shape[2]))
    np.cumsum(contrib, axis=1, out=out[:, 1:, :])
    return out


def apply_values(op: Operator, values: np.ndarray, driver: DriverEnsemble) -> np.ndarray:
    """Raw-array application; `values` is [M, N+1, d] on the driver's grid."""
    grid = driver.grid
    if op.kind == "superposition":
        return _superposition_values(op.coefficient, grid, values, driver)
    if op.kind == "lebesgue":
        return _left_cumsum(values[:, :-1, :] * grid.dt)
    if op.kind == "ito":
        inc = driver.increments
        d = values.shape[2]
        if op.column is not None:
            if not 0 <= op.column < driver.d_w:
                raise DimensionMismatchError(f"driver column {op.column} out of range d_w={driver.d_w}")
            inc = inc[:, :, op.column:op.column + 1]
        elif d != driver.d_w and driver.d_w != 1:
            raise DimensionMismatchError(f"integrand d={d} does not pair with driver d_w={driver.d_w}")
        return _left_cumsum(values[:, :-1, :] * inc)
    if op.kind == "clamp":
        if op.box.lo.shape != values.shape[1:]:
            raise ShapeMismatchError(f"box shape {op.box.lo.shape} != {values.shape[1:]}")
        return clamp_values(values, op.box)
    if op.kind == "interp":
        return interp_values(values, stride_for(grid, op.level.n))
    if op.kind == "composite":
        out = values
        for part in reversed(op.parts):
            out = apply_values(part, out, driver)
        return out
    if op.kind == "sum":
        parts = iter(op.parts)
        out = apply_values(next(parts), values, driver)
        for part in parts:
            term = apply_values(part, values, driver)
            if term.shape != out.shape:
                raise DimensionMismatchError(f"sum parts produced shapes {out.shape} and {term.shape}")
            out = out + term
        return out
    if op.kind == "constant":
        v = np.asarray(op.value, dtype=float)
        out = np.empty_like(values)
        if v.ndim <= 1:
            out[...] = v.reshape(1, 1, -1) if v.ndim == 1 else v
        else:
            out[...] = v[:, None, :]
        return out
    if op.kind == "custom":
        return np.asarray(op.fn(values, driver), dtype=float)
    raise ValueError(f"unhandled kind {op.kind!r}")


def apply(op: Operator, x: PathEnsemble, driver: DriverEnsemble) -> PathEnsemble:
    """Apply the operator scenario-wise; output shares the input's grid and M."""
    if x.grid != driver.grid or x.M != driver.M:
        raise ShapeMismatchError(
            f"input ({x.grid}, M={x.M}) does not match driver ({driver.grid}, M={driver.M})")
    return ensemble_from_values(x.grid, apply_values(op, x.values, driver))


# -- planted violations for harness tests --------------------------------------

def demo_nonlocal_mean() -> Operator:
    """x |-> x + cross-scenario mean of x: deliberately non-local."""
    def rule(values, driver):
        return values + values.mean(axis=0, keepdims=True)
    return custom_operator(rule, causality=CAUSAL, name="nonlocal_mean")


def demo_anticipating_endpoint() -> Operator:
    """y[m, k] = W[m, N] for all k: reads the driver's future everywhere."""
    def rule(values, driver):
        d = values.shape[2]
        if driver.d_w == d:
            tail = driver.paths[:, -1:, :]
        else:
            tail = driver.paths[:, -1:, 0:1]
        return np.broadcast_to(tail, values.shape).copy()
    return custom_operator(rule, causality=CAUSAL, name="anticipating_endpoint")


# -- property harnesses ---------------------------------------------------------

@dataclass(frozen=True)
class LocalityReport:
    op_name: str
    trials: int
    failures: int
    first_counterexample: tuple | None = None  # (trial, scenario, node, coord)

    @property
    def passed(self) -> bool:
        return self.failures == 0


def locality_check(op: Operator, x: PathEnsemble, y: PathEnsemble,
                   driver: DriverEnsemble, trials: int, seed: int) -> LocalityReport:
    """Splice test for Def.-style locality, bitwise.

    For random scenario subsets A: with z = x on A and y off A, apply(op, z)
    must equal apply(op, x) on A and apply(op, y) off A, exactly.
    """
    from .pathspace import check_same_shape
    check_same_shape(x, y)
    hx = apply_values(op, x.values, driver)
    hy = apply_values(op, y.values, driver)
    failures = 0
    first = None
    for trial in range(trials):
        mask = substream(seed, trial).random(x.M) < 0.5
        z = np.where(mask[:, None, None], x.values, y.values)
        hz = apply_values(op, z, driver)
        expected = np.where(mask[:, None, None], hx, hy)
        if not np.array_equal(hz, expected):
            failures += 1
            if first is None:
                m, k, c = np.argwhere(hz != expected)[0]
                first = (trial, int(m), int(k), int(c))
    return LocalityReport(op.name, trials, failures, first)


@dataclass(frozen=True)
class AdaptednessReport:
    op_name: str
    k_split: int
    trials: int
    failures: int
    first_counterexample: tuple | None = None  # (trial, scenario, node, coord)

    @property
    def passed(self) -> bool:
        return self.failures == 0


def coupled_driver(driver: DriverEnsemble, k_split: int, alt_seed: int) -> DriverEnsemble:
    """Driver sharing increments on [0..k_split) with `driver`, independent after."""
    alt = np.empty_like(driver.increments)
    for m in range(driver.M):
        alt[m] = substream(alt_seed, m).standard_normal(alt.shape[1:])
    alt *= np.sqrt(driver.grid.dt)
    spliced = driver.increments.copy()
    spliced[:, k_split:, :] = alt[:, k_split:, :]
    return driver_from_increments(driver.grid, spliced, seed=alt_seed)


def adaptedness_check(op: Operator, grid: TimeGrid, M: int, d: int, d_w: int,
                      k_split: int, trials: int, seed: int) -> AdaptednessReport:
    """Prefix-coupling test: tail-modified drivers must not change outputs on [0..k_split].

    Applies the operator to one fixed input under paired drivers that share
    increments before the split and are independent after; outputs on nodes
    0..k_split must agree bitwise.
    """
    if not 0 <= k_split <= grid.N:
        raise ValueError(f"k_split {k_split} outside 0..{grid.N}")
    failures = 0
    first = None
    for trial in range(trials):
        base = np.empty((M, grid.N, d_w))
        for m in range(M):
            base[m] = substream(seed, trial, 0, m).standard_normal((grid.N, d_w))
        base *= np.sqrt(grid.dt)
        drv_a = driver_from_increments(grid, base, seed=seed)
        drv_b = coupled_driver(drv_a, k_split, alt_seed=_mix(seed, trial, 1))
        x = np.empty((M, grid.N + 1, d))
        for m in range(M):
            x[m] = substream(seed, trial, 2, m).standard_normal((grid.N + 1, d))
        ya = apply_values(op, x, drv_a)
        yb = apply_values(op, x, drv_b)
        if not np.array_equal(ya[:, :k_split + 1, :], yb[:, :k_split + 1, :]):
            failures += 1
            if first is None:
                m, k, c = np.argwhere(ya[:, :k_split + 1, :] != yb[:, :k_split + 1, :])[0]
                first = (trial, int(m), int(k), int(c))
    return AdaptednessReport(op.name, k_split, trials, failures, first)


def adaptedness_sweep(op: Operator, grid: TimeGrid, M: int, d: int, d_w: int,
                      trials: int, seed: int) -> list[AdaptednessReport]:
    """adaptedness_check at every split index 0..N."""
    return [adaptedness_check(op, grid, M, d, d_w, k, trials, seed)
            for k in range(grid.N + 1)]


def _mix(seed: int, *path: int) -> int:
    from .rng import _fold
    return _fold((int(seed),) + tuple(int(p) for p in path))


# -- everyday coefficient builders ----------------------------------------------

def state_coefficient(name: str, g: Callable, bound: float | None = None,
                      growth: str | None = None) -> Coefficient:
    """Coefficient depending on the state only: f(t, x, w) = g(x)."""
    return Coefficient(name=name, fn=lambda t, x, w: g(x), bound=bound, growth=growth)


def time_coefficient(name: str, g: Callable) -> Coefficient:
    """Coefficient depending on node time only: broadcasts g(t) over scenarios/coords."""
    def fn(t, x, w):
        return np.broadcast_to(g(t), x.shape).copy()
    return Coefficient(name=name, fn=fn)
