"""Integration over simplices: exact monomial moments, fully symmetric
fixed-degree cubature, and adaptive subdivision with sphere-aware splitting.

The adaptive driver handles integrands of the form (alpha*e_+ + beta*e_-)^p
with e(x) = |x - x0|^2 - rho, whose only non-smoothness sits on the sphere
|x - x0|^2 = rho.  Cells are classified against that sphere; cells on one
side are smooth (and, for integer p, integrated exactly by the rule), only
straddling cells are refined.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial, gamma, pi

import numpy as np

from .geometry import Simplex, point_simplex_distance2, volume

DEFAULT_CELL_BUDGET = 200_000


@dataclass(frozen=True)
class QuadratureRule:
    """Fully symmetric rule on the reference simplex, in barycentric form.

    ``nodes`` has shape (n, d+1) with rows summing to 1; ``weights`` sum to 1,
    so that integral(f, T) ~ vol(T) * sum_i w_i f(x(node_i)).
    """

    dim: int
    degree: int
    nodes: np.ndarray
    weights: np.ndarray

    def points_on(self, verts: np.ndarray) -> np.ndarray:
        """Physical node coordinates on one simplex (m, d) -> (n, d)."""
        return self.nodes @ verts

    def integrate(self, f, s: Simplex) -> float:
        pts = self.points_on(s.vertices)
        return float(volume(s) * (self.weights @ np.asarray(f(pts), dtype=float)))


def _compositions(total: int, parts: int):
    """All tuples of `parts` nonnegative integers summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def grundmann_moeller(dim: int, s: int) -> QuadratureRule:
    """Grundmann-Moeller simplex rule of degree 2s+1 in `dim` dimensions.

    Weights are accumulated exactly as rationals before normalization; the
    rule has some negative weights, which is fine at the moderate degrees
    used here.
    """
    if dim < 1 or s < 0:
        raise ValueError("need dim >= 1 and s >= 0")
    deg = 2 * s + 1
    acc: dict[tuple, Fraction] = {}
    for i in range(s + 1):
        denom = deg + dim - 2 * i
        w = (
            Fraction((-1) ** i)
            * Fraction(denom) ** deg
            / (Fraction(4) ** s * factorial(i) * factorial(deg + dim - i))
        )
        for comp in _compositions(s - i, dim + 1):
            key = tuple(2 * k + 1 for k in comp) + (denom,)
            acc[key] = acc.get(key, Fraction(0)) + w
    total = sum(acc.values())
    keys = sorted(acc.keys())
    nodes = np.array([[num / key[-1] for num in key[:-1]] for key in keys])
    weights = np.array([float(acc[key] / total) for key in keys])
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(dim=dim, degree=deg, nodes=nodes, weights=weights)


def integrate_barycentric_monomial(s: Simplex, exponents) -> float:
    """Exact integral of a barycentric monomial prod lambda_i^a_i via the
    factorial formula d! * vol * prod(a_i!) / (d + sum a_i)!."""
    a = [int(k) for k in exponents]
    if len(a) != s.dim + 1 or any(k < 0 for k in a):
        raise ValueError("need d+1 nonnegative integer exponents")
    num = factorial(s.dim) * np.prod([float(factorial(k)) for k in a])
    return float(volume(s) * num / factorial(s.dim + sum(a)))


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict[tuple, float] = {}
    for ka, va in p.items():
        for kb, vb in q.items():
            key = tuple(x + y for x, y in zip(ka, kb))
            out[key] = out.get(key, 0.0) + va * vb
    return out


def integrate_monomial_exact(s: Simplex, exponents, basis: str = "cartesian") -> float:
    """Exact integral of a monomial over the simplex.

    basis="barycentric": d+1 exponents, factorial formula.
    basis="cartesian": d exponents over coordinates x_i; each x_i is expanded
    in barycentric coordinates and the product reduced to the factorial form.
    """
    if basis == "barycentric":
        return integrate_barycentric_monomial(s, exponents)
    if basis != "cartesian":
        raise ValueError(f"unknown basis {basis!r}")
    e = [int(k) for k in exponents]
    if len(e) != s.dim or any(k < 0 for k in e):
        raise ValueError("need d nonnegative integer exponents")
    m = s.dim + 1
    poly = {tuple([0] * m): 1.0}
    unit = np.eye(m, dtype=int)
    for i, power in enumerate(e):
        lin = {tuple(unit[k]): float(s.vertices[k, i]) for k in range(m)}
        for _ in range(power):
            poly = _poly_mul(poly, lin)
    total = 0.0
    base = factorial(s.dim) * volume(s)
    for key, coeff in poly.items():
        num = np.prod([float(factorial(k)) for k in key])
        total += coeff * base * num / factorial(s.dim + sum(key))
    return float(total)


@lru_cache(maxsize=None)
def barycentric_moment_tensor(dim: int, order: int) -> np.ndarray:
    """Tensor M[i1..in] = integral of lambda_i1 ... lambda_in over a unit-volume
    simplex; multiply by vol(T) for a general simplex."""
    m = dim + 1
    out = np.empty((m,) * order)
    base = factorial(dim) / factorial(dim + order)
    for idx in itertools.product(range(m), repeat=order):
        counts = np.bincount(idx, minlength=m)
        num = 1.0
        for c in counts:
            num *= factorial(int(c))
        out[idx] = base * num
    out.flags.writeable = False
    return out


@dataclass
class IntegralEstimate:
    """Adaptive integration result; error_estimate > tol flags non-convergence."""

    value: float
    error_estimate: float
    cells_used: int

    @property
    def converged_to(self) -> float:
        return self.error_estimate


@lru_cache(maxsize=None)
def _edge_pairs(m: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(m), 2)))


def _bisect_longest_edge(verts: np.ndarray) -> np.ndarray:
    """Longest-edge bisection of a batch of cells (nc, m, d) -> (2nc, m, d)."""
    nc, m, _ = verts.shape
    pairs = _edge_pairs(m)
    diffs = verts[:, pairs[:, 0], :] - verts[:, pairs[:, 1], :]
    l2 = (diffs**2).sum(axis=2)
    k = l2.argmax(axis=1)
    i = pairs[k, 0]
    j = pairs[k, 1]
    rows = np.arange(nc)
    mids = 0.5 * (verts[rows, i, :] + verts[rows, j, :])
    left = verts.copy()
    right = verts.copy()
    left[rows, i, :] = mids
    right[rows, j, :] = mids
    return np.concatenate([left, right], axis=0)


def _cell_volumes(verts: np.ndarray) -> np.ndarray:
    d = verts.shape[2]
    return np.abs(np.linalg.det(verts[:, 1:, :] - verts[:, :1, :])) / factorial(d)


def _cell_diam2(verts: np.ndarray) -> np.ndarray:
    pairs = _edge_pairs(verts.shape[1])
    diffs = verts[:, pairs[:, 0], :] - verts[:, pairs[:, 1], :]
    return (diffs**2).sum(axis=2).max(axis=1)


def _ball_volume(d: int, radius2: float) -> float:
    return pi ** (d / 2) / gamma(d / 2 + 1) * radius2 ** (d / 2)


# Cell-vs-sphere classification codes.
_OUTSIDE, _INSIDE, _STRADDLE = 0, 1, 2


def _classify_cells(verts: np.ndarray, center: np.ndarray, rho: float) -> np.ndarray:
    """Conservative classification of cells against |x-center|^2 = rho.

    Misclassification is impossible for OUTSIDE/INSIDE; ambiguous cells are
    STRADDLE, which only costs extra refinement.
    """
    nc = verts.shape[0]
    if rho <= 0.0:
        return np.full(nc, _OUTSIDE, dtype=np.int8)
    r2 = ((verts - center) ** 2).sum(axis=2)
    rmax = r2.max(axis=1)
    rmin = r2.min(axis=1)
    cls = np.full(nc, _STRADDLE, dtype=np.int8)
    cls[rmax <= rho] = _INSIDE
    all_out = rmin >= rho
    if np.any(all_out):
        sq_rho = np.sqrt(rho)
        # cheap sufficient condition first, exact point-to-cell distance after
        clear = np.sqrt(rmin) >= sq_rho + np.sqrt(_cell_diam2(verts))
        cls[all_out & clear] = _OUTSIDE
        for idx in np.nonzero(all_out & ~clear)[0]:
            if point_simplex_distance2(center, verts[idx]) >= rho:
                cls[idx] = _OUTSIDE
    return cls


class _AsymIntegrand:
    """Vector integrand for (alpha e_+ + beta e_-)^p and its (a, c)-gradient.

    Component 0 is the value phi(e); with_grad adds phi'(e)*(-x_i) for each
    coordinate and phi'(e)*(-1).  `branch` selects the smooth polynomial
    continuation on one-sided cells (exact under the rule for integer p).
    """

    def __init__(self, center, rho, p, alpha, beta, with_grad=False):
        self.center = np.asarray(center, dtype=float)
        self.rho = float(rho)
        self.p = float(p)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.with_grad = with_grad
        self.is_int = abs(p - round(p)) < 1e-12 and p <= 10
        self.ncomp = 1 + (self.center.size + 1 if with_grad else 0)

    def __call__(self, pts: np.ndarray, branch: int) -> np.ndarray:
        """pts (..., d) -> components (..., ncomp) for the given cell class."""
        p, a, b = self.p, self.alpha, self.beta
        e = ((pts - self.center) ** 2).sum(axis=-1) - self.rho
        if branch == _OUTSIDE:
            base = e if self.is_int else np.maximum(e, 0.0)
            val = a**p * base**p
            dval = p * a**p * base ** (p - 1) if self.with_grad else None
        elif branch == _INSIDE:
            base = -e if self.is_int else np.maximum(-e, 0.0)
            val = b**p * base**p
            dval = -p * b**p * base ** (p - 1) if self.with_grad else None
        else:
            ep = np.maximum(e, 0.0)
            em = np.maximum(-e, 0.0)
            val = a**p * ep**p + b**p * em**p
            if self.with_grad:
                if p == 1.0:
                    dval = np.where(e > 0.0, a, 0.0) - np.where(e < 0.0, b, 0.0)
                else:
                    dval = p * (a**p * ep ** (p - 1) - b**p * em ** (p - 1))
            else:
                dval = None
        if not self.with_grad:
            return val[..., None]
        out = np.empty(val.shape + (self.ncomp,))
        out[..., 0] = val
        out[..., 1:-1] = -dval[..., None] * pts
        out[..., -1] = -dval
        return out

    def kink_bound_factor(self) -> float:
        """Scale of the value mismatch between the two smooth branches on the
        ball; used to keep straddling-cell error estimates honest when the
        rules happen to miss the kink."""
        p, a, b = self.p, self.alpha, self.beta
        if self.rho <= 0:
            return 0.0
        if self.is_int:
            return abs(b**p - (-1.0) ** round(p) * a**p) * self.rho**p
        return (a**p + b**p) * self.rho**p


def _integrate_asym_components(
    verts0: np.ndarray,
    integrand: _AsymIntegrand,
    tol: float,
    max_cells: int = DEFAULT_CELL_BUDGET,
) -> tuple[np.ndarray, float, int]:
    """Adaptive sphere-split driver.

    Returns (component values, error estimate of component 0, cells used).
    Refinement is driven by the value component with per-cell error shares
    proportional to cell volume; straddling cells are the only ones refined
    for integer p.
    """
    d = verts0.shape[1] - 1
    s_hi = max(3, round(integrand.p) if integrand.is_int else 3)
    rule_hi = grundmann_moeller(d, s_hi)
    rule_lo = grundmann_moeller(d, s_hi - 1)
    vol_total = _cell_volumes(verts0[None])[0]
    kink_factor = integrand.kink_bound_factor()
    ball_vol = _ball_volume(d, integrand.rho) if integrand.rho > 0 else 0.0

    active = verts0[None].copy()
    value = np.zeros(integrand.ncomp)
    err_final = 0.0
    used = 0
    while active.shape[0]:
        nc = active.shape[0]
        vols = _cell_volumes(active)
        cls = _classify_cells(active, integrand.center, integrand.rho)
        vals_hi = np.zeros((nc, integrand.ncomp))
        err = np.zeros(nc)
        exact = np.zeros(nc, dtype=bool)
        for branch in (_OUTSIDE, _INSIDE, _STRADDLE):
            mask = cls == branch
            if not np.any(mask):
                continue
            pts = np.einsum("nm,cmd->cnd", rule_hi.nodes, active[mask])
            comp = integrand(pts, branch)
            vals_hi[mask] = vols[mask, None] * np.einsum(
                "n,cnk->ck", rule_hi.weights, comp
            )
            if branch != _STRADDLE and integrand.is_int:
                exact[mask] = True
            else:
                pts_lo = np.einsum("nm,cmd->cnd", rule_lo.nodes, active[mask])
                comp_lo = integrand(pts_lo, branch)
                vals_lo = vols[mask, None] * np.einsum(
                    "n,cnk->ck", rule_lo.weights, comp_lo
                )
                err[mask] = np.abs(vals_hi[mask, 0] - vals_lo[:, 0])
                if branch == _STRADDLE and kink_factor > 0.0:
                    err[mask] += kink_factor * np.minimum(
                        vols[mask], min(ball_vol, vol_total)
                    )
        err[exact] = 0.0
        used += nc
        running = abs(value[0]) + np.abs(vals_hi[:, 0]).sum()
        eff_tol = max(tol, 1e-13 * running)
        share = eff_tol * vols / vol_total
        done = (err <= share) | (err <= 1e-16 * (1.0 + running))
        if used + 2 * np.count_nonzero(~done) > max_cells:
            done[:] = True  # budget exhausted: keep honest error estimates
        value += vals_hi[done].sum(axis=0)
        err_final += err[done].sum()
        active = _bisect_longest_edge(active[~done]) if np.any(~done) else active[:0]
    return value, err_final, used


def integrate_asym_power(
    center,
    level: float,
    params,
    s: Simplex,
    tol: float = 1e-9,
    max_cells: int = DEFAULT_CELL_BUDGET,
) -> IntegralEstimate:
    """Integral over the simplex of (alpha e_+ + beta e_-)^p with
    e(x) = |x - center|^2 - level.  Finite p only."""
    p = float(params.p)
    if not np.isfinite(p):
        raise ValueError("integrate_asym_power needs finite p")
    if not (np.isfinite(params.alpha) and np.isfinite(params.beta)):
        raise ValueError("integrate_asym_power needs finite weights")
    integrand = _AsymIntegrand(center, level, p, params.alpha, params.beta)
    vals, err, used = _integrate_asym_components(
        s.vertices, integrand, tol, max_cells
    )
    return IntegralEstimate(value=float(vals[0]), error_estimate=err, cells_used=used)


def integrate_adaptive(
    f,
    s: Simplex,
    tol: float = 1e-9,
    max_cells: int = DEFAULT_CELL_BUDGET,
) -> IntegralEstimate:
    """Adaptive integration of a scalar field f((n, d) array) -> (n,).

    Degree-7 symmetric rule per cell, embedded degree-5 rule for the error
    estimate, longest-edge bisection of the worst cells; the cell budget is
    a hard cap and exceeding it is reported through error_estimate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = s.dim
    rule_hi = grundmann_moeller(d, 3)
    rule_lo = grundmann_moeller(d, 2)
    vol_total = volume(s)

    active = s.vertices[None].copy()
    value = 0.0
    err_final = 0.0
    used = 0
    while active.shape[0]:
        nc = active.shape[0]
        vols = _cell_volumes(active)
        pts_hi = np.einsum("nm,cmd->cnd", rule_hi.nodes, active)
        pts_lo = np.einsum("nm,cmd->cnd", rule_lo.nodes, active)
        nhi = rule_hi.nodes.shape[0]
        both = np.concatenate(
            [pts_hi.reshape(-1, d), pts_lo.reshape(-1, d)], axis=0
        )
        fv = np.asarray(f(both), dtype=float)
        f_hi = fv[: nc * nhi].reshape(nc, nhi)
        f_lo = fv[nc * nhi :].reshape(nc, -1)
        vals_hi = vols * (f_hi @ rule_hi.weights)
        vals_lo = vols * (f_lo @ rule_lo.weights)
        err = np.abs(vals_hi - vals_lo)
        used += nc
        running = abs(value) + np.abs(vals_hi).sum()
        eff_tol = max(tol, 1e-13 * running)
        share = eff_tol * vols / vol_total
        done = (err <= share) | (err <= 1e-16 * (1.0 + running))
        if used + 2 * np.count_nonzero(~done) > max_cells:
            done[:] = True
        value += vals_hi[done].sum()
        err_final += err[done].sum()
        active = _bisect_longest_edge(active[~done]) if np.any(~done) else active[:0]
    return IntegralEstimate(value=float(value), error_estimate=err_final, cells_used=used)
