"""Infinite-width mean-field maps, fixed points, and the analytic
order-to-chaos boundary.

The scalar state is (nu, c12): pre-activation variance and cross-input
covariance. One layer updates them through the Gaussian expectations

    g(nu)      = sigma_w^2 E[f(sqrt(nu) z)^2] + sigma_b^2
    h(nu, c12) = sigma_w^2 E[f(u1) f(u2)]     + sigma_b^2

with (u1, u2) jointly Gaussian, Var = nu, Cov = c12, realized as
u1 = sqrt(nu) z1, u2 = sqrt(nu) (rho z1 + sqrt(1 - rho^2) z2) with
rho = c12 / nu. Expectations default to a uniform grid over a truncated
standard normal: for activations that saturate (erf, tanh) the integrand
transition narrows like 1/sqrt(nu), where the uniform grid keeps
converging superalgebraically while Gauss-Hermite would need its order
scaled with nu. A Gauss-Hermite rule is also available.

The asymptotic divergence of an input pair is 2 (nu* - c*) where nu* is
the fixed point of g and c* the smallest fixed point of h(nu*, .).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

__all__ = [
    "MeanFieldState",
    "QuadratureRule", "gauss_hermite", "normal_grid", "variance_map",
    "covariance_map", "fixed_point_variance", "fixed_point_covariance",
    "mean_field_divergence", "trace_boundary", "FixedPointError",
]

_DEFAULT_ORDER = 512


class FixedPointError(RuntimeError):
    """Fixed-point iteration failed to converge; carries the last state."""

    def __init__(self, message: str, last: float, residual: float):
        super().__init__(f"{message} (last={last!r}, residual={residual!r})")
        self.last = last
        self.residual = residual


@dataclass(frozen=True)
class MeanFieldState:
    """Scalar state of the layer recursion: pre-activation variance nu
    and cross-input covariance c12, with |c12| <= nu (Cauchy-Schwarz)."""

    nu: float
    c12: float

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be >= 0")
        if abs(self.c12) > self.nu:
            raise ValueError(
                f"|c12| = {abs(self.c12)} exceeds nu = {self.nu}")

    def step(self, sigma_w: float, sigma_b: float, activation: str = "erf",
             rule: "QuadratureRule | None" = None) -> "MeanFieldState":
        """One layer of the joint (nu, c12) recursion."""
        nu = variance_map(self.nu, sigma_w, sigma_b, activation, rule)
        c = covariance_map(self.nu, self.c12, sigma_w, sigma_b, activation,
                           rule)
        return MeanFieldState(nu, min(c, nu))

    @property
    def divergence(self) -> float:
        """Expected per-component divergence 2 (nu - c12) of the state."""
        return 2.0 * (self.nu - self.c12)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights integrating against the standard normal density."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


def gauss_hermite(order: int) -> QuadratureRule:
    """Gauss-Hermite rule rescaled to weight (1/sqrt(2 pi)) exp(-u^2/2).

    Exact for polynomials of degree <= 2 order - 1.
    """
    from scipy.special import roots_hermite
    x, w = roots_hermite(order)
    return QuadratureRule(nodes=x * np.sqrt(2.0),
                          weights=w / np.sqrt(np.pi), order=order)


def normal_grid(order: int = _DEFAULT_ORDER,
                half_width: float = 13.0) -> QuadratureRule:
    """Uniform grid on [-half_width, half_width] with normal-density
    weights, normalized to sum to one (trapezoidal quadrature against the
    truncated standard normal)."""
    if order < 3:
        raise ValueError("order must be >= 3")
    z = np.linspace(-half_width, half_width, order)
    w = np.exp(-0.5 * z * z)
    w[0] *= 0.5
    w[-1] *= 0.5
    w /= w.sum()
    return QuadratureRule(nodes=z, weights=w, order=order)


_default_rule: QuadratureRule | None = None


def _rule_or_default(rule: QuadratureRule | None) -> QuadratureRule:
    global _default_rule
    if rule is not None:
        return rule
    if _default_rule is None:
        _default_rule = normal_grid()
    return _default_rule


def _f(activation):
    if activation == "erf":
        return erf
    if activation == "tanh":
        return np.tanh
    raise ValueError(f"unknown activation {activation!r}")


def variance_map(nu: float, sigma_w: float, sigma_b: float,
                 activation: str = "erf",
                 rule: QuadratureRule | None = None) -> float:
    """One step of the variance recursion g(nu)."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    rule = _rule_or_default(rule)
    f = _f(activation)
    vals = f(np.sqrt(nu) * rule.nodes)
    return float(sigma_w**2 * np.dot(rule.weights, vals * vals) + sigma_b**2)


def covariance_map(nu: float, c12: float, sigma_w: float, sigma_b: float,
                   activation: str = "erf",
                   rule: QuadratureRule | None = None) -> float:
    """One step of the covariance recursion h(nu, c12)."""
    if nu < 0:
        raise ValueError("nu must be >= 0")
    if abs(c12) > nu:
        raise ValueError(f"|c12| = {abs(c12)} exceeds nu = {nu}")
    if nu == 0.0:
        return float(sigma_b**2)
    rule = _rule_or_default(rule)
    f = _f(activation)
    rho = c12 / nu
    z1 = rule.nodes
    z2 = rule.nodes
    u1 = np.sqrt(nu) * z1
    u2 = np.sqrt(nu) * (rho * z1[:, None]
                        + np.sqrt(max(1.0 - rho * rho, 0.0)) * z2[None, :])
    inner = _f(activation)(u2) @ rule.weights
    total = np.dot(rule.weights, f(u1) * inner)
    return float(sigma_w**2 * total + sigma_b**2)


def _iterate(step, x0: float, tol: float, max_iter: int, what: str,
             lo: float | None = None, hi: float | None = None) -> float:
    """Fixed-point iteration with 0.5 damping if the residual oscillates.

    Near criticality the map's slope approaches 1 and plain iteration
    stalls, so a guarded Aitken delta-squared update is interleaved: it
    targets the same limit the plain iteration approaches and is only
    accepted when it shrinks the residual and stays inside [lo, hi].
    Convergence is always judged by |step(x) - x| <= tol.
    """
    x = float(x0)
    prev_res = None
    res = np.inf
    damp = False
    for _ in range(max_iter):
        fx = step(x)
        res = fx - x
        if abs(res) <= tol:
            return fx
        if prev_res is not None and res * prev_res < 0:
            damp = True
        if not damp and prev_res is not None and abs(res) < abs(prev_res):
            ffx = step(fx)
            res2 = ffx - fx
            if abs(res2) <= tol:
                return ffx
            denom = res2 - res
            if denom != 0.0:
                xa = x - res * res / denom
                if ((lo is None or xa >= lo)
                        and (hi is None or xa <= hi)):
                    fa = step(xa)
                    resa = fa - xa
                    if abs(resa) <= tol:
                        return fa
                    if abs(resa) < abs(res2):
                        x, prev_res = xa, resa
                        continue
            x, prev_res = ffx, res2
            continue
        x = x + 0.5 * res if damp else fx
        prev_res = res
    raise FixedPointError(f"{what} did not converge in {max_iter} steps",
                          last=x, residual=abs(res))


def fixed_point_variance(sigma_w: float, sigma_b: float,
                         activation: str = "erf",
                         rule: QuadratureRule | None = None,
                         tol: float = 1e-10,
                         max_iter: int = 100_000) -> float:
    """Fixed point nu* of the variance map, from nu0 = sw^2 + sb^2."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    rule = _rule_or_default(rule)
    return _iterate(
        lambda nu: variance_map(nu, sigma_w, sigma_b, activation, rule),
        sigma_w**2 + sigma_b**2, tol, max_iter, "variance fixed point",
        lo=0.0)


def fixed_point_covariance(nu_star: float, sigma_w: float, sigma_b: float,
                           activation: str = "erf",
                           rule: QuadratureRule | None = None,
                           tol: float = 1e-10,
                           max_iter: int = 100_000) -> float:
    """Smallest fixed point of c -> h(nu*, c), iterated up from c0 = 0."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    rule = _rule_or_default(rule)
    c = _iterate(
        lambda c: covariance_map(nu_star, min(c, nu_star), sigma_w, sigma_b,
                                 activation, rule),
        0.0, tol, max_iter, "covariance fixed point",
        lo=0.0, hi=nu_star)
    return min(c, nu_star)


def mean_field_divergence(sigma_w: float, sigma_b: float,
                          activation: str = "erf",
                          rule: QuadratureRule | None = None,
                          tol: float = 1e-10,
                          max_iter: int = 100_000) -> float:
    """Asymptotic divergence 2 (nu* - c*), clamped at zero."""
    rule = _rule_or_default(rule)
    nu = fixed_point_variance(sigma_w, sigma_b, activation, rule, tol,
                              max_iter)
    c = fixed_point_covariance(nu, sigma_w, sigma_b, activation, rule, tol,
                               max_iter)
    return max(2.0 * (nu - c), 0.0)


def trace_boundary(tau: float, sigma_b_values, sw_min: float = 0.0,
                   sw_max: float = 4.0, tol: float = 1e-4,
                   activation: str = "erf",
                   rule: QuadratureRule | None = None,
                   fp_tol: float = 1e-10) -> list[tuple[float | None, float]]:
    """Locate the level set {divergence = tau} by bisection in sigma_w,
    one crossing per sigma_b row. Rows without a bracketing crossing (or
    with a non-monotone coarse profile) yield (None, sigma_b)."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    rule = _rule_or_default(rule)
    out: list[tuple[float | None, float]] = []
    for sb in np.atleast_1d(np.asarray(sigma_b_values, dtype=np.float64)):
        sb = float(sb)

        def ell(sw: float) -> float:
            return mean_field_divergence(sw, sb, activation, rule,
                                         tol=fp_tol)

        coarse = [ell(sw) for sw in np.linspace(sw_min, sw_max, 9)]
        if any(b < a - 10 * fp_tol for a, b in zip(coarse, coarse[1:])):
            warnings.warn(f"divergence not monotone in sigma_w at "
                          f"sigma_b={sb}; row skipped")
            out.append((None, sb))
            continue
        lo, hi = sw_min, sw_max
        if not (coarse[0] < tau <= coarse[-1]):
            out.append((None, sb))
            continue
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if ell(mid) < tau:
                lo = mid
            else:
                hi = mid
        out.append((0.5 * (lo + hi), sb))
    return out
