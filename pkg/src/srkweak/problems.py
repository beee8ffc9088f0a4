"""Test problems and functionals for expansion checks and convergence studies.

Problems bundle batched drift/diffusion evaluators with optional analytic
machinery: multilinear derivative evaluators (used by the series expansion),
diffusion Jacobians (used by the calculus conversion), and closed-form
moments of the exact solution (the reference values for weak-error
measurements).  All shipped problems are linear, so the derivative
evaluators are short and exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

__all__ = ["SdeProblem", "Functional", "FUNCTIONALS", "builtin_problem", "BUILTIN_PROBLEMS"]


@dataclass(frozen=True)
class SdeProblem:
    """Drift/diffusion evaluators for a d-dimensional system with m noise terms.

    ``drift(t, x)`` maps states of shape ``(..., d)`` to the same shape;
    ``diffusion(t, x, j)`` evaluates the j-th diffusion column (1-based).
    ``diffusion_jacobian(t, x, j)`` returns ``(..., d, d)`` with axis order
    ``[component, derivative]``.  ``drift_deriv(order, x, dirs)`` and
    ``diffusion_deriv(j, order, x, dirs)`` evaluate symmetric multilinear
    derivative forms at an unbatched point (order 0 is the plain value);
    they are only needed for series expansions and may be None.
    ``exact_moments[f_id](T)`` gives the exact expectation of a functional
    of the solution at time ``T`` started from ``x0`` at time 0.
    """

    name: str
    d: int
    m: int
    calculus: str
    x0: np.ndarray
    drift: Callable
    diffusion: Callable
    diffusion_jacobian: "Callable | None" = None
    drift_deriv: "Callable | None" = None
    diffusion_deriv: "Callable | None" = None
    exact_moments: Mapping[str, Callable] = field(default_factory=dict)

    def __post_init__(self):
        if self.calculus not in ("ito", "strat"):
            raise ValueError("calculus must be 'ito' or 'strat'")
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        if self.x0.shape != (self.d,):
            raise ValueError(f"x0 must have shape ({self.d},)")


@dataclass(frozen=True)
class Functional:
    """Scalar test functional with its multilinear derivative evaluator."""

    name: str
    value: Callable                       # (..., d) -> (...)
    deriv: Callable                       # (order, x, dirs) -> float, order 0 = value


def _f_first_component():
    def value(x):
        return x[..., 0]

    def deriv(order, x, dirs):
        if order == 0:
            return float(x[0])
        if order == 1:
            return float(dirs[0][0])
        return 0.0

    return Functional("x", value, deriv)


def _f_first_component_squared():
    def value(x):
        return x[..., 0] ** 2

    def deriv(order, x, dirs):
        if order == 0:
            return float(x[0]) ** 2
        if order == 1:
            return 2.0 * float(x[0]) * float(dirs[0][0])
        if order == 2:
            return 2.0 * float(dirs[0][0]) * float(dirs[1][0])
        return 0.0

    return Functional("x2", value, deriv)


FUNCTIONALS: dict[str, Functional] = {
    f.name: f for f in (_f_first_component(), _f_first_component_squared())
}


# ---------------------------------------------------------------------------
# Geometric Brownian motion, d = m = 1
# ---------------------------------------------------------------------------


def gbm(mu: float = 1.5, sigma: float = 0.1, x0: float = 0.1, calculus: str = "ito") -> SdeProblem:
    """Linear scalar problem with multiplicative noise.

    Under the stratonovich reading the same coefficients describe the ito
    process with drift rate ``mu + sigma**2/2``; the exact moments account
    for that.
    """
    mu_ito = mu + 0.5 * sigma**2 if calculus == "strat" else mu

    def drift(t, x):
        return mu * x

    def diffusion(t, x, j):
        return sigma * x

    def diffusion_jacobian(t, x, j):
        shape = x.shape + (x.shape[-1],)
        out = np.zeros(shape)
        out[..., 0, 0] = sigma
        return out

    def drift_deriv(order, x, dirs):
        if order == 0:
            return mu * np.asarray(x, dtype=float)
        if order == 1:
            return mu * np.asarray(dirs[0], dtype=float)
        return np.zeros_like(np.asarray(x, dtype=float))

    def diffusion_deriv(j, order, x, dirs):
        if order == 0:
            return sigma * np.asarray(x, dtype=float)
        if order == 1:
            return sigma * np.asarray(dirs[0], dtype=float)
        return np.zeros_like(np.asarray(x, dtype=float))

    moments = {
        "x": lambda T: x0 * np.exp(mu_ito * T),
        "x2": lambda T: x0**2 * np.exp((2 * mu_ito + sigma**2) * T),
    }
    return SdeProblem(
        name=f"gbm-{calculus}",
        d=1,
        m=1,
        calculus=calculus,
        x0=np.array([x0]),
        drift=drift,
        diffusion=diffusion,
        diffusion_jacobian=diffusion_jacobian,
        drift_deriv=drift_deriv,
        diffusion_deriv=diffusion_deriv,
        exact_moments=moments,
    )


# ---------------------------------------------------------------------------
# Two-dimensional linear system with commutative multiplicative noise
# ---------------------------------------------------------------------------


def linear2d(calculus: str = "ito") -> SdeProblem:
    """d = m = 2 linear system; each diffusion column is a scalar multiple of
    the state, so the noise is commutative."""
    A = np.array([[-0.5, 0.2], [0.1, -0.3]])
    sigmas = (0.1, 0.15)
    x0 = np.array([1.0, 0.5])
    s2 = sum(s**2 for s in sigmas)
    A_ito = A + (0.5 * s2) * np.eye(2) if calculus == "strat" else A

    def drift(t, x):
        return x @ A.T

    def diffusion(t, x, j):
        return sigmas[j - 1] * x

    def diffusion_jacobian(t, x, j):
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = sigmas[j - 1]
        out[..., 1, 1] = sigmas[j - 1]
        return out

    def drift_deriv(order, x, dirs):
        if order == 0:
            return A @ np.asarray(x, dtype=float)
        if order == 1:
            return A @ np.asarray(dirs[0], dtype=float)
        return np.zeros(2)

    def diffusion_deriv(j, order, x, dirs):
        if order == 0:
            return sigmas[j - 1] * np.asarray(x, dtype=float)
        if order == 1:
            return sigmas[j - 1] * np.asarray(dirs[0], dtype=float)
        return np.zeros(2)

    def _expm_times(M, t, v):
        vals, vecs = np.linalg.eig(M)
        coef = np.linalg.solve(vecs, v.astype(complex))
        return (vecs @ (np.exp(vals * t) * coef)).real

    def mean_x(T):
        return float(_expm_times(A_ito, T, x0)[0])

    def mean_x2(T):
        # Second-moment matrix obeys a constant-coefficient linear equation.
        K = np.kron(A_ito, np.eye(2)) + np.kron(np.eye(2), A_ito) + s2 * np.eye(4)
        vec = _expm_times(K, T, np.outer(x0, x0).reshape(-1))
        return float(vec.reshape(2, 2)[0, 0])

    return SdeProblem(
        name=f"linear2d-{calculus}",
        d=2,
        m=2,
        calculus=calculus,
        x0=x0,
        drift=drift,
        diffusion=diffusion,
        diffusion_jacobian=diffusion_jacobian,
        drift_deriv=drift_deriv,
        diffusion_deriv=diffusion_deriv,
        exact_moments={"x": mean_x, "x2": mean_x2},
    )


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck with additive noise
# ---------------------------------------------------------------------------


def ornstein_uhlenbeck(rate: float = 1.0, sigma: float = 0.5, x0: float = 1.0) -> SdeProblem:
    """Additive-noise linear problem; ito and stratonovich forms coincide."""

    def drift(t, x):
        return -rate * x

    def diffusion(t, x, j):
        return np.full_like(x, sigma)

    def diffusion_jacobian(t, x, j):
        return np.zeros(x.shape + (x.shape[-1],))

    def drift_deriv(order, x, dirs):
        if order == 0:
            return -rate * np.asarray(x, dtype=float)
        if order == 1:
            return -rate * np.asarray(dirs[0], dtype=float)
        return np.zeros_like(np.asarray(x, dtype=float))

    def diffusion_deriv(j, order, x, dirs):
        if order == 0:
            return np.full(1, sigma)
        return np.zeros(1)

    moments = {
        "x": lambda T: x0 * np.exp(-rate * T),
        "x2": lambda T: x0**2 * np.exp(-2 * rate * T)
        + sigma**2 * (1 - np.exp(-2 * rate * T)) / (2 * rate),
    }
    return SdeProblem(
        name="ou",
        d=1,
        m=1,
        calculus="ito",
        x0=np.array([x0]),
        drift=drift,
        diffusion=diffusion,
        diffusion_jacobian=diffusion_jacobian,
        drift_deriv=drift_deriv,
        diffusion_deriv=diffusion_deriv,
        exact_moments=moments,
    )


BUILTIN_PROBLEMS: dict[str, Callable[..., SdeProblem]] = {
    "gbm": gbm,
    "linear2d": linear2d,
    "ou": ornstein_uhlenbeck,
}


def builtin_problem(spec: "str | Mapping") -> SdeProblem:
    """Resolve a builtin problem name or a ``{"kind": ..., params}`` mapping."""
    if isinstance(spec, str):
        name, _, calc = spec.partition(":")
        if name not in BUILTIN_PROBLEMS:
            raise KeyError(
                f"unknown problem {name!r}; builtins: {sorted(BUILTIN_PROBLEMS)}"
            )
        return BUILTIN_PROBLEMS[name](**({"calculus": calc} if calc else {}))
    params = dict(spec)
    kind = params.pop("kind")
    if kind not in BUILTIN_PROBLEMS:
        raise KeyError(f"unknown problem kind {kind!r}")
    return BUILTIN_PROBLEMS[kind](**params)
