"""Stochastic initial-value problems packaged as fixed-point operators.

An SDE dx = f0(t, x) dt + sum_j fj(t, x) dWj with x(a) = x0 becomes the
operator (h x)(t) = x0 + int_a^t f0 ds + sum_j int_a^t fj dWj, whose
fixed points are the discretized solutions; on the grid, forward substitution
of h reproduces the Euler-Maruyama recursion.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, UnknownPresetError
from .fixpoint import SchemeConfig, solve_level
from .operators import (Coefficient, Operator, compose, constant_operator,
                        ito_integral, lebesgue_integral, operator_sum,
                        state_coefficient, superposition)
from .pathspace import DriverEnsemble, PathEnsemble, constant_ensemble


@dataclass(frozen=True)
class SDEProblem:
    """Coefficients and initial data of one stochastic initial-value problem."""

    d: int
    d_w: int
    x0: object                        # scalar, [d] or per-scenario [M, d]
    drift: Coefficient
    diffusions: tuple[Coefficient, ...]
    name: str = "sde"

    def __post_init__(self):
        if len(self.diffusions) > self.d_w:
            raise DimensionMismatchError(
                f"{len(self.diffusions)} diffusion terms but driver dimension {self.d_w}")


def as_operator(p: SDEProblem) -> Operator:
    """(h x)(t) = x0 + int f0(s, x) ds + sum_j int fj(s, x) dWj; strictly causal."""
    parts = [constant_operator(p.x0), compose(lebesgue_integral(), superposition(p.drift))]
    for j, fj in enumerate(p.diffusions):
        parts.append(compose(ito_integral(column=j), superposition(fj)))
    op = operator_sum(*parts)
    return Operator(kind=op.kind, causality=op.causality, parts=op.parts, name=p.name)


def preset(name: str, **params) -> SDEProblem:
    """Named problem instances.

    gbm(mu, sigma, x0): drift mu*x, diffusion sigma*x.
    ou(theta, sigma, x0): drift -theta*x, constant diffusion sigma.
    bounded_tanh(c, x0): drift and diffusion c*tanh(x), uniformly bounded by |c|.
    driver_coupled(x0): drift clip(sin(W(t)) * x, -1, 1), no diffusion; the
    coefficient reads the driver prefix pointwise, exercising random coefficients.
    """
    if name == "gbm":
        mu, sigma, x0 = params.pop("mu"), params.pop("sigma"), params.pop("x0")
        _no_extras(name, params)
        return SDEProblem(
            d=1, d_w=1, x0=float(x0),
            drift=state_coefficient("gbm_drift", lambda x: mu * x, growth="linear"),
            diffusions=(state_coefficient("gbm_diffusion", lambda x: sigma * x, growth="linear"),),
            name="gbm")
    if name == "ou":
        theta, sigma, x0 = params.pop("theta"), params.pop("sigma"), params.pop("x0")
        _no_extras(name, params)
        return SDEProblem(
            d=1, d_w=1, x0=float(x0),
            drift=state_coefficient("ou_drift", lambda x: -theta * x, growth="linear"),
            diffusions=(Coefficient("ou_diffusion", lambda t, x, w: np.full_like(x, sigma),
                                    bound=abs(float(sigma))),),
            name="ou")
    if name == "bounded_tanh":
        c, x0 = params.pop("c"), params.pop("x0")
        _no_extras(name, params)
        coeff = state_coefficient("tanh_coeff", lambda x: c * np.tanh(x),
                                  bound=abs(float(c)), growth="bounded")
        return SDEProblem(d=1, d_w=1, x0=float(x0), drift=coeff, diffusions=(coeff,),
                          name="bounded_tanh")
    if name == "driver_coupled":
        x0 = params.pop("x0")
        _no_extras(name, params)
        drift = Coefficient("driver_coupled_drift",
                            lambda t, x, w: np.clip(np.sin(w[:, :, 0:1]) * x, -1.0, 1.0),
                            bound=1.0, growth="bounded")
        return SDEProblem(d=1, d_w=1, x0=float(x0), drift=drift, diffusions=(),
                          name="driver_coupled")
    raise UnknownPresetError(f"unknown preset {name!r}; expected gbm, ou, bounded_tanh or driver_coupled")


def _no_extras(name, params):
    if params:
        raise UnknownPresetError(f"unexpected parameters for preset {name!r}: {sorted(params)}")


def _ball_clamped(coeff: Coefficient, x0, radius: float) -> Coefficient:
    """Compose a coefficient with the per-coordinate clamp onto |x - x0| <= radius."""
    lo, hi = np.asarray(x0, dtype=float) - radius, np.asarray(x0, dtype=float) + radius

    def fn(t, x, w):
        return coeff.fn(t, np.clip(x, lo, hi), w)

    return Coefficient(name=f"{coeff.name}|r={radius}", fn=fn,
                       bound=coeff.bound, growth=coeff.growth)


def _localized_operator(p: SDEProblem, radius: float) -> Operator:
    local = SDEProblem(d=p.d, d_w=p.d_w, x0=p.x0,
                       drift=_ball_clamped(p.drift, p.x0, radius),
                       diffusions=tuple(_ball_clamped(f, p.x0, radius) for f in p.diffusions),
                       name=f"{p.name}|r={radius}")
    return as_operator(local)


def exit_nodes(values: np.ndarray, x0, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """First node where max-coordinate |x - x0| exceeds the radius, per scenario.

    Scenarios that never exit carry node index N and an exit flag of False.
    """
    dist = np.max(np.abs(values - np.asarray(x0, dtype=float)), axis=2)  # [M, N+1]
    outside = dist > radius
    exited = outside.any(axis=1)
    nodes = np.where(exited, outside.argmax(axis=1), values.shape[1] - 1)
    return nodes.astype(int), exited


def solve_localized(p: SDEProblem, radii, driver: DriverEnsemble,
                    config: SchemeConfig) -> tuple[PathEnsemble, np.ndarray, np.ndarray]:
    """Radius-ladder localization: solve with state clamped to growing balls.

    For each radius the coefficients are composed with the projection onto the
    ball around x0; consecutive solutions must agree bitwise before the
    smaller radius' stopping node (checked).  Returns the largest-radius path
    with its stopping nodes and exit flags.
    """
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii) or radii != sorted(set(radii)):
        raise ValueError(f"radii must be strictly increasing and positive, got {radii}")
    x_init = constant_ensemble(driver.grid, driver.M, p.d, p.x0)
    prev_values = None
    prev_nodes = None
    for radius in radii:
        solve = solve_level(_localized_operator(p, radius), x_init, driver, config)
        values = solve.alpha.values
        nodes, exited = exit_nodes(values, p.x0, radius)
        if prev_values is not None:
            for m in range(driver.M):
                upto = prev_nodes[m] + 1
                if not np.array_equal(values[m, :upto, :], prev_values[m, :upto, :]):
                    raise RuntimeError(
                        f"localization inconsistency at scenario {m}: radius ladder "
                        f"solutions disagree before the stopping node")
        prev_values, prev_nodes = values, nodes
    return PathEnsemble(grid=driver.grid, M=driver.M, d=p.d, values=prev_values), nodes, exited
