"""Newton iteration and initial guesses.

Each step solves the frozen-coefficient linear problem

    gradient part + quartic linearization at psi_k + linear bulk term
        applied to psi_{k+1}
    =  2 * cubic term at psi_k  +  load,

which is algebraically identical to the Newton update
psi_{k+1} = psi_k - J(psi_k)^{-1} residual(psi_k); the implementation uses
the increment form and stops when the discrete norm of the increment drops
below the tolerance.

A single solve is sequential over iterations; independent solves (e.g. a
level sweep) can run concurrently since spaces, configs and data are
immutable.
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np
import scipy.sparse.linalg as spla

from .exceptions import ConfigError, LinearSolveError, NewtonError
from .fespace import Field, Space, discrete_norm
from .forms import MethodConfig, NonlinearSystem
from .mesh import UNIT_SQUARE

DEVICE_STATES = ("D1", "D2", "R1", "R2", "R3", "R4")


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-8
    max_iter: int = 50
    record_history: bool = True

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("Newton tolerance must be positive")
        if self.max_iter < 1:
            raise ConfigError("Newton iteration budget must be at least 1")


@dataclass
class NewtonReport:
    iterations: int = 0
    increments: list = dataclass_field(default_factory=list)
    converged: bool = False
    residual_norm: float = np.inf


def _direct_solve(matrix, rhs):
    try:
        lu = spla.splu(matrix.tocsc())
        out = lu.solve(rhs)
    except RuntimeError as exc:  # umfpack/superlu reports singularity this way
        raise LinearSolveError(
            f"sparse direct factorization failed ({exc}); "
            f"matrix inf-norm {abs(matrix).sum(axis=1).max():.3e}") from exc
    if not np.all(np.isfinite(out)):
        raise LinearSolveError("sparse direct solve produced non-finite values "
                               "(singular linear system)")
    return out


def laplace_guess(space: Space, cfg: MethodConfig, g, f=None) -> Field:
    """Solution of the linear problem with the same boundary data and
    source: gradient-part matrix against the load vector."""
    system = NonlinearSystem(space, cfg, g, f)
    coeffs = _direct_solve(system.gradient, system.load)
    return Field(space, coeffs)


def _trapezoid(t, d):
    t = np.asarray(t, dtype=float)
    return np.clip(np.minimum(t, 1.0 - t) / d, 0.0, 1.0)


def _nearest_edge_data(points, d):
    """Tangent boundary data continued into the square from the nearest
    edge: (T_d(x), 0) from the horizontal edges, (-T_d(y), 0) from the
    vertical ones."""
    x, y = points[:, 0], points[:, 1]
    dist_h = np.minimum(y, 1.0 - y)
    dist_v = np.minimum(x, 1.0 - x)
    vals = np.zeros_like(points)
    horizontal = dist_h <= dist_v
    vals[horizontal, 0] = _trapezoid(x[horizontal], d)
    vals[~horizontal, 0] = -_trapezoid(y[~horizontal], d)
    return vals


def director_guess(space: Space, epsilon: float, state: str) -> Field:
    """Initial iterate for the square device targeting one of the six
    states.  In the interior the order parameter is (cos 2a, sin 2a) with
    unit degree of order and director angle a: constant along a diagonal
    for D1/D2, rotating by pi across the square for R1-R4.  Within a
    boundary layer of width d = 3 epsilon the iterate is blended into the
    tangent boundary data, so boundary nodes carry g exactly."""
    if state not in DEVICE_STATES:
        raise ConfigError(f"unknown device state {state!r}; "
                          f"expected one of {DEVICE_STATES}")
    if space.mesh.shape is None or space.mesh.shape.kind != UNIT_SQUARE:
        raise ConfigError("director guess is defined on the unit-square device")
    d = 3.0 * epsilon
    pts = space.node_coords
    x, y = pts[:, 0], pts[:, 1]
    if state == "D1":
        angle = np.full_like(x, np.pi / 4)
    elif state == "D2":
        angle = np.full_like(x, 3 * np.pi / 4)
    elif state == "R1":
        angle = np.pi * y
    elif state == "R2":
        angle = -np.pi * y
    elif state == "R3":
        angle = np.pi / 2 + np.pi * x
    else:
        angle = np.pi / 2 - np.pi * x
    director = np.stack([np.cos(2 * angle), np.sin(2 * angle)], axis=1)

    t = np.minimum(np.minimum(x, 1.0 - x), np.minimum(y, 1.0 - y))
    wgt = np.clip(t / d, 0.0, 1.0)[:, None]
    vals = wgt * director + (1.0 - wgt) * _nearest_edge_data(pts, d)
    return Field(space, np.concatenate([vals[:, 0], vals[:, 1]]))


def newton_solve(space: Space, cfg: MethodConfig, g, f, guess: Field,
                 ncfg: NewtonConfig = NewtonConfig()):
    """Newton iteration from the given guess; returns (solution, report).

    Raises :class:`NewtonError` with the partial history when the iteration
    budget is exhausted.
    """
    if guess.space is not space:
        raise ConfigError("initial guess does not live on the target space")
    system = NonlinearSystem(space, cfg, g, f)
    coeffs = guess.coeffs.copy()
    report = NewtonReport()
    for _ in range(ncfg.max_iter):
        jac = system.jacobian(coeffs)
        delta = _direct_solve(jac, -system.residual(coeffs))
        coeffs = coeffs + delta
        inc = discrete_norm(Field(space, delta), cfg.method, cfg.sigma)
        report.iterations += 1
        if ncfg.record_history:
            report.increments.append(inc)
        if inc <= ncfg.tol:
            report.converged = True
            report.residual_norm = float(
                np.abs(system.residual(coeffs)).max())
            return Field(space, coeffs), report
    report.residual_norm = float(np.abs(system.residual(coeffs)).max())
    raise NewtonError(
        f"Newton iteration did not reach tol={ncfg.tol} within "
        f"{ncfg.max_iter} steps (last increment "
        f"{report.increments[-1] if report.increments else np.inf:.3e})",
        report=report)
