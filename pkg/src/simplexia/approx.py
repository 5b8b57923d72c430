"""Best affine approximation of Q(x) = sum x_j^2 on a simplex in weighted
asymmetric L_p norms, plus one-sided (from above / from below) variants and
the volume-normalized error functional sigma.

The residual of any affine candidate u(x) = a.x + c decomposes as
Q(x) - u(x) = |x - x0|^2 - rho with x0 = a/2 and rho = c + |a|^2/4, so the
sign structure of the residual is controlled by one sphere.  That fact backs
the exact sup-norm evaluator, the sphere-aware quadrature, and the one-sided
constraint handling below.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import inf, isfinite

import numpy as np
from scipy import optimize
from scipy.linalg import cho_factor, cho_solve

from .geometry import (
    DegenerateSimplexError,
    Simplex,
    point_simplex_distance2,
    closest_point_in_simplex,
    volume,
)
from .quadrature import (
    DEFAULT_CELL_BUDGET,
    _AsymIntegrand,
    _integrate_asym_components,
    barycentric_moment_tensor,
    grundmann_moeller,
    integrate_adaptive,
)

DEFAULT_SOLVER_TOL = 1e-7
DEFAULT_QUAD_TOL = 1e-9


@dataclass(frozen=True)
class AffineFunction:
    """u(x) = a.x + c."""

    a: np.ndarray
    c: float

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a.ndim != 1 or not np.all(np.isfinite(a)) or not isfinite(self.c):
            raise ValueError("affine coefficients must be finite")
        a.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "c", float(self.c))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.a + self.c


@dataclass(frozen=True)
class AsymParams:
    """Exponent p in [1, inf] and one-sided weights alpha, beta in (0, inf]."""

    p: float
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        p = float(self.p)
        if not (p >= 1.0):
            raise ValueError(f"p must be in [1, inf], got {self.p}")
        alpha, beta = float(self.alpha), float(self.beta)
        if not (alpha > 0.0 and beta > 0.0):
            raise ValueError("alpha and beta must be positive")
        if np.isinf(alpha) and np.isinf(beta):
            raise ValueError("at most one of alpha, beta may be infinite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def finite_weights(self) -> bool:
        return isfinite(self.alpha) and isfinite(self.beta)

    @property
    def onesided(self) -> str | None:
        """'above' when alpha = inf, 'below' when beta = inf, else None."""
        if np.isinf(self.alpha):
            return "above"
        if np.isinf(self.beta):
            return "below"
        return None


@dataclass
class ApproxResult:
    error: float
    minimizer: AffineFunction
    evaluations: int
    gradient_norm_at_exit: float
    evaluator: str
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "error": self.error,
            "a": self.minimizer.a.tolist(),
            "c": self.minimizer.c,
            "evaluator": self.evaluator,
            "flags": list(self.flags),
        }


def error_decomposition(u: AffineFunction) -> tuple[np.ndarray, float]:
    """Center and level of the residual: Q - u = |x - x0|^2 - rho."""
    x0 = 0.5 * u.a
    rho = u.c + float(u.a @ u.a) / 4.0
    return x0, rho


def vertex_interpolant(s: Simplex) -> AffineFunction:
    """The unique affine function matching Q at all d+1 vertices (lies above
    Q on the simplex since Q is convex)."""
    verts = s.vertices
    mat = np.column_stack([verts, np.ones(len(verts))])
    rhs = (verts**2).sum(axis=1)
    try:
        sol = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSimplexError("interpolation matrix is singular") from exc
    return AffineFunction(a=sol[:-1], c=float(sol[-1]))


def centroid_tangent(s: Simplex) -> AffineFunction:
    """Tangent plane to Q at the centroid (lies below Q everywhere)."""
    g = s.centroid()
    return AffineFunction(a=2.0 * g, c=-float(g @ g))


# ---------------------------------------------------------------------------
# per-simplex moment workspace


class _Workspace:
    """Exact low-order moments of a simplex, shared by the evaluators."""

    def __init__(self, s: Simplex):
        self.simplex = s
        verts = s.vertices
        d = s.dim
        vol = volume(s)
        self.vol = vol
        m1 = barycentric_moment_tensor(d, 1) * vol
        m2 = barycentric_moment_tensor(d, 2) * vol
        m3 = barycentric_moment_tensor(d, 3) * vol
        m4 = barycentric_moment_tensor(d, 4) * vol
        self.Sx = np.einsum("k,ki->i", m1, verts)
        self.Sxx = np.einsum("kl,ki,lj->ij", m2, verts, verts)
        gram = verts @ verts.T
        self.SQ = float(np.einsum("kl,kl->", m2, gram))
        self.SQx = np.einsum("klm,kl,mi->i", m3, gram, verts)
        self.SQQ = float(np.einsum("klmn,kl,mn->", m4, gram, gram))
        mat = np.zeros((d + 1, d + 1))
        mat[:d, :d] = self.Sxx
        mat[:d, d] = self.Sx
        mat[d, :d] = self.Sx
        mat[d, d] = vol
        self.moment_matrix = mat
        self.chol = cho_factor(mat)
        self.scale = max(1.0, float(np.abs(verts).max()) ** 2)

    def quadratic_residual_sq(self, a: np.ndarray, c: float) -> float:
        """Exact integral of (Q - a.x - c)^2 over the simplex."""
        z = np.append(a, c)
        r = np.append(self.SQx, self.SQ)
        return float(self.SQQ - 2.0 * z @ r + z @ self.moment_matrix @ z)


def eval_error_p2_exact(s: Simplex, u: AffineFunction) -> float:
    """Exact moment-based plain L_2 error |Q - u|_2 (alpha = beta = 1)."""
    ws = _Workspace(s)
    return float(np.sqrt(max(ws.quadratic_residual_sq(u.a, u.c), 0.0)))


def closed_form_p2(s: Simplex) -> ApproxResult:
    """Least-squares optimum for p = 2, alpha = beta = 1 from exact moments;
    independent of the iterative solver path."""
    ws = _Workspace(s)
    rhs = np.append(ws.SQx, ws.SQ)
    z = cho_solve(ws.chol, rhs)
    u = AffineFunction(a=z[:-1], c=float(z[-1]))
    err2 = ws.quadratic_residual_sq(u.a, u.c)
    return ApproxResult(
        error=float(np.sqrt(max(err2, 0.0))),
        minimizer=u,
        evaluations=1,
        gradient_norm_at_exit=0.0,
        evaluator="closed-form",
    )


# ---------------------------------------------------------------------------
# error evaluation


def _sup_parts(verts: np.ndarray, a: np.ndarray, c: float) -> tuple[float, float]:
    """(sup of (Q-u)_+, sup of (Q-u)_-) over the simplex, exactly.

    The residual is convex, so its max sits at a vertex; its min sits at the
    projection of the sphere center onto the simplex.
    """
    e_verts = (verts**2).sum(axis=1) - verts @ a - c
    pos = max(float(e_verts.max()), 0.0)
    x0 = 0.5 * a
    rho = c + float(a @ a) / 4.0
    neg = 0.0
    if rho > 0.0:
        neg = max(rho - point_simplex_distance2(x0, verts), 0.0)
    return pos, neg


def eval_error(
    s: Simplex,
    u: AffineFunction,
    params: AsymParams,
    tol: float = DEFAULT_QUAD_TOL,
    max_cells: int = DEFAULT_CELL_BUDGET,
    full: bool = False,
):
    """Asymmetric L_p error of one affine candidate.

    For p = inf the value is exact; for finite p it comes from the
    sphere-split adaptive quadrature at absolute tolerance `tol` on the
    p-th power.  With full=True returns (error, flags, cells).
    """
    if not params.finite_weights:
        raise ValueError("eval_error needs finite weights; see best_onesided")
    if u.a.shape[0] != s.dim:
        raise ValueError("affine function dimension does not match simplex")
    flags: list[str] = []
    if np.isinf(params.p):
        pos, neg = _sup_parts(s.vertices, u.a, u.c)
        err = max(params.alpha * pos, params.beta * neg)
        return (err, flags, 0) if full else err
    x0, rho = error_decomposition(u)
    integrand = _AsymIntegrand(x0, rho, params.p, params.alpha, params.beta)
    vals, err_est, used = _integrate_asym_components(
        s.vertices, integrand, tol, max_cells
    )
    if err_est > max(tol, 1e-12 * abs(vals[0])):
        flags.append("quadrature-budget")
    err = float(max(vals[0], 0.0) ** (1.0 / params.p))
    return (err, flags, used) if full else err


# ---------------------------------------------------------------------------
# unconstrained solver


class _SmoothObjective:
    """G(z) = integral of (alpha e_+ + beta e_-)^p and its (a, c) gradient."""

    def __init__(self, ws: _Workspace, params: AsymParams, quad_tol: float):
        self.ws = ws
        self.params = params
        self.quad_tol = quad_tol
        self.evals = 0
        self.flagged = False

    def value_grad(self, z: np.ndarray, tol: float | None = None):
        d = self.ws.simplex.dim
        a, c = z[:d], z[d]
        x0 = 0.5 * a
        rho = c + float(a @ a) / 4.0
        integrand = _AsymIntegrand(
            x0, rho, self.params.p, self.params.alpha, self.params.beta, with_grad=True
        )
        vals, err, _ = _integrate_asym_components(
            self.ws.simplex.vertices, integrand, tol or self.quad_tol
        )
        self.evals += 1
        if err > max(self.quad_tol, 1e-10 * abs(vals[0])):
            self.flagged = True
        return float(vals[0]), vals[1:]

    def value(self, z: np.ndarray, tol: float | None = None) -> float:
        return self.value_grad(z, tol)[0]


def _descend(obj: _SmoothObjective, z0: np.ndarray, tol: float, max_iter: int = 200):
    """Backtracking descent preconditioned by the exact moment matrix.

    The moment matrix is the Hessian of the p = 2 objective and a sound
    metric for the other exponents; for p = 2 the step is a Newton step.
    """
    p = obj.params.p
    z = np.asarray(z0, dtype=float).copy()
    loose = 10.0 * obj.quad_tol
    g_val, g_grad = obj.value_grad(z, loose)
    t = 1.0
    grad_f_norm = np.inf
    for _ in range(max_iter):
        f_val = g_val ** (1.0 / p) if g_val > 0 else 0.0
        grad_f_norm = (
            float(np.linalg.norm(g_grad)) * (g_val ** (1.0 / p - 1.0) / p)
            if g_val > 0
            else 0.0
        )
        if grad_f_norm <= tol * max(1.0, f_val):
            break
        direction = -cho_solve(obj.ws.chol, g_grad)
        slope = float(g_grad @ direction)
        if slope >= 0.0:  # conditioning breakdown; bail to the caller
            break
        accepted = False
        for _ in range(50):
            z_new = z + t * direction
            v_new = obj.value(z_new, loose)
            if v_new <= g_val + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        z = z_new
        g_val, g_grad = obj.value_grad(z, loose)
        t = min(t * 2.0, 1.0)
    return z, g_val, grad_f_norm


def _polish_nelder(fun, z0: np.ndarray, scale: float, maxfev: int = 400):
    res = optimize.minimize(
        fun,
        z0,
        method="Nelder-Mead",
        options={
            "xatol": 1e-10 * max(1.0, scale),
            "fatol": 1e-12 * max(1.0, scale),
            "maxfev": maxfev,
            "initial_simplex": None,
        },
    )
    return res.x, float(res.fun), int(res.nfev)


def _start_candidates(s: Simplex, params: AsymParams) -> list[np.ndarray]:
    """Warm starts: vertex interpolant, centroid tangent, and for p = inf the
    weight-balanced downward shift of the interpolant."""
    u_i = vertex_interpolant(s)
    u_t = centroid_tangent(s)
    starts = [np.append(u_i.a, u_i.c), np.append(u_t.a, u_t.c)]
    if np.isinf(params.p):
        x0, rho = error_decomposition(u_i)
        gap = rho - point_simplex_distance2(x0, s.vertices)
        if gap > 0:
            shift = params.beta * gap / (params.alpha + params.beta)
            starts.insert(0, np.append(u_i.a, u_i.c - shift))
    return starts


def _min_norm_in_hull(grads: np.ndarray, iters: int = 500) -> float:
    """Norm of the least-norm point of conv(rows); Frank-Wolfe suffices for
    the handful of active pieces that occur here."""
    w = np.full(grads.shape[0], 1.0 / grads.shape[0])
    point = w @ grads
    for k in range(1, iters + 1):
        scores = grads @ point
        j = int(np.argmin(scores))
        step = 2.0 / (k + 2.0)
        point = (1.0 - step) * point + step * grads[j]
    return float(np.linalg.norm(point))


def _solve_sup(s: Simplex, params: AsymParams, tol: float, max_iter: int = 300):
    """p = inf: subgradient descent with diminishing steps, then a
    Nelder-Mead polish; each evaluation is exact."""
    verts = s.vertices
    d = s.dim
    alpha, beta = params.alpha, params.beta

    def pieces(z):
        a, c = z[:d], z[d]
        e_verts = (verts**2).sum(axis=1) - verts @ a - c
        vals = [alpha * float(ev) for ev in e_verts]
        grads = [np.append(-alpha * verts[j], -alpha) for j in range(d + 1)]
        x0 = 0.5 * a
        rho = c + float(a @ a) / 4.0
        if rho > 0.0:
            proj = closest_point_in_simplex(x0, verts)
            vals.append(beta * (rho - float(((x0 - proj) ** 2).sum())))
            grads.append(np.append(beta * proj, beta))
        return np.array(vals), np.vstack(grads)

    def fun(z):
        return float(pieces(z)[0].max())

    evals = 0
    best_z, best_f = None, np.inf
    for z0 in _start_candidates(s, params):
        z = z0.copy()
        f0 = fun(z)
        evals += 1
        if f0 < best_f:
            best_z, best_f = z.copy(), f0
        t0 = 0.1 * max(f0, 1e-12)
        for k in range(1, max_iter + 1):
            vals, grads = pieces(z)
            g = grads[int(np.argmax(vals))]
            gn = float(np.linalg.norm(g))
            if gn == 0.0:
                break
            z = z - (t0 / k) * g / gn
            f = float(vals.max())
            evals += 1
            if f < best_f:
                best_z, best_f = z.copy(), f
    z, f, nfev = _polish_nelder(fun, best_z, scale=best_f)
    evals += nfev
    if f > best_f:
        z, f = best_z, best_f
    vals, grads = pieces(z)
    active = grads[vals >= f - 1e-9 * max(1.0, f)]
    stat = _min_norm_in_hull(active) if len(active) else 0.0
    return z, f, stat, evals


def best_approx(
    s: Simplex,
    params: AsymParams,
    tol: float = DEFAULT_SOLVER_TOL,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> ApproxResult:
    """Global minimum of the convex error functional over affine candidates.

    Smooth exponents run a preconditioned analytic-gradient descent with
    backtracking; p = 1 adds a Nelder-Mead polish on stall; p = inf runs
    subgradient descent plus polish on the exact sup evaluator.  Multi-start
    from the vertex interpolant and the centroid tangent plane.
    """
    if not params.finite_weights:
        raise ValueError("best_approx needs finite weights; see best_onesided")
    flags: list[str] = []
    if np.isinf(params.p):
        z, f, stat, evals = _solve_sup(s, params, tol)
        u = AffineFunction(a=z[: s.dim], c=float(z[s.dim]))
        if stat > tol * max(1.0, f):
            flags.append("solver-stationarity")
        return ApproxResult(
            error=f,
            minimizer=u,
            evaluations=evals,
            gradient_norm_at_exit=stat,
            evaluator="minimax-exact",
            flags=flags,
        )

    ws = _Workspace(s)
    p = params.p
    obj = _SmoothObjective(ws, params, quad_tol)
    best = None
    for z0 in _start_candidates(s, params):
        z, g_val, grad_norm = _descend(obj, z0, tol)
        if best is None or g_val < best[1]:
            best = (z, g_val, grad_norm)
    z, g_val, grad_norm = best

    if grad_norm > tol * max(1.0, g_val ** (1.0 / p)):
        if p > 1.0:
            res = optimize.minimize(
                lambda zz: obj.value_grad(zz),
                z,
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": 200, "ftol": 1e-15, "gtol": 1e-12},
            )
            if res.fun < g_val:
                z, g_val = res.x, float(res.fun)
            _, grad = obj.value_grad(z)
            grad_norm = (
                float(np.linalg.norm(grad)) * (g_val ** (1.0 / p - 1.0) / p)
                if g_val > 0
                else 0.0
            )
        else:
            z2, f2, nfev = _polish_nelder(
                lambda zz: obj.value(zz), z, scale=max(1.0, g_val)
            )
            obj.evals += nfev
            if f2 < g_val:
                z, g_val = z2, f2
            _, grad = obj.value_grad(z)
            grad_norm = (
                float(np.linalg.norm(grad)) * (g_val ** (1.0 / p - 1.0) / p)
                if g_val > 0
                else 0.0
            )

    u = AffineFunction(a=z[: s.dim], c=float(z[s.dim]))
    err, eflags, _ = eval_error(s, u, params, tol=quad_tol, full=True)
    flags.extend(eflags)
    if obj.flagged:
        flags.append("quadrature-loose")
    if grad_norm > tol * max(1.0, err):
        flags.append("solver-stationarity")
    return ApproxResult(
        error=err,
        minimizer=u,
        evaluations=obj.evals,
        gradient_norm_at_exit=grad_norm,
        evaluator="quadrature",
        flags=sorted(set(flags)),
    )


# ---------------------------------------------------------------------------
# one-sided approximation


def _integrate_signed_power(verts: np.ndarray, a, c, p: float, sign: float) -> float:
    """Exact/rule integral of (sign * (Q - a.x - c))^p when the residual has
    that sign on the whole simplex (polynomial integrand for integer p)."""
    d = verts.shape[1]
    is_int = abs(p - round(p)) < 1e-12 and p <= 10
    rule = grundmann_moeller(d, max(3, round(p) if is_int else 5))
    pts = rule.nodes @ verts
    e = (pts**2).sum(axis=1) - pts @ a - c
    vals = np.maximum(sign * e, 0.0) ** p
    from .geometry import volume_of_vertices

    return float(volume_of_vertices(verts) * (rule.weights @ vals))


def best_onesided(
    s: Simplex,
    p: float,
    side: str,
    tol: float = DEFAULT_SOLVER_TOL,
) -> ApproxResult:
    """Best approximation constrained to one side of Q.

    side="above" (u >= Q): the concave gap u - Q is minimized at vertices, so
    feasibility is the d+1 vertex inequalities and the optimal offset is
    c = max_j (Q(t_j) - a.t_j).  side="below" (u <= Q): feasibility is the
    exact ball-containment condition and c = dist(a/2, T)^2 - |a|^2/4.  In
    both cases c is eliminated and the remaining convex problem in a is
    solved by direct search.
    """
    if side not in ("above", "below"):
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")
    p = float(p)
    if not p >= 1.0:
        raise ValueError("p must be in [1, inf]")
    verts = s.vertices
    d = s.dim
    q_verts = (verts**2).sum(axis=1)

    if side == "above":

        def c_of_a(a):
            return float((q_verts - verts @ a).max())

        sign = -1.0
    else:

        def c_of_a(a):
            return point_simplex_distance2(0.5 * a, verts) - float(a @ a) / 4.0

        sign = 1.0

    evals = 0
    is_int = isfinite(p) and abs(p - round(p)) < 1e-12 and p <= 10

    def objective(a):
        nonlocal evals
        evals += 1
        c = c_of_a(a)
        if np.isinf(p):
            if side == "above":
                x0 = 0.5 * a
                rho = c + float(a @ a) / 4.0
                return max(rho - point_simplex_distance2(x0, verts), 0.0)
            return float(np.maximum(q_verts - verts @ a - c, 0.0).max())
        if is_int:
            return _integrate_signed_power(verts, a, c, p, sign)
        u = AffineFunction(a=a, c=c)
        x0, rho = error_decomposition(u)

        def f(pts):
            e = ((pts - x0) ** 2).sum(axis=1) - rho
            return np.maximum(sign * e, 0.0) ** p

        return integrate_adaptive(f, s, tol=1e-10).value

    u_i = vertex_interpolant(s)
    starts = [u_i.a, 2.0 * s.centroid()]
    best_a, best_v = None, np.inf
    nfev_total = 0
    for a0 in starts:
        res = optimize.minimize(
            objective,
            a0,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14, "maxfev": 2000},
        )
        nfev_total += int(res.nfev)
        if res.fun < best_v:
            best_a, best_v = np.atleast_1d(res.x), float(res.fun)
    a = best_a
    u = AffineFunction(a=a, c=c_of_a(a))
    err = best_v if np.isinf(p) else best_v ** (1.0 / p)
    return ApproxResult(
        error=float(err),
        minimizer=u,
        evaluations=evals,
        gradient_norm_at_exit=0.0,
        evaluator="minimax-exact" if np.isinf(p) else "closed-form" if is_int else "quadrature",
        flags=[],
    )


def sigma(
    s: Simplex,
    params: AsymParams,
    tol: float = DEFAULT_SOLVER_TOL,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> float:
    """Best error divided by vol^(1 + 1/p); infinite alpha or beta dispatches
    to the corresponding one-sided problem."""
    side = params.onesided
    if side is not None:
        result = best_onesided(s, params.p, side, tol)
    else:
        result = best_approx(s, params, tol, quad_tol)
    expo = 1.0 if np.isinf(params.p) else 1.0 + 1.0 / params.p
    return result.error / volume(s) ** expo


def sigma_result(
    s: Simplex,
    params: AsymParams,
    tol: float = DEFAULT_SOLVER_TOL,
    quad_tol: float = DEFAULT_QUAD_TOL,
) -> tuple[float, ApproxResult]:
    """sigma plus the underlying solver result (for reporting)."""
    side = params.onesided
    if side is not None:
        result = best_onesided(s, params.p, side, tol)
    else:
        result = best_approx(s, params, tol, quad_tol)
    expo = 1.0 if np.isinf(params.p) else 1.0 + 1.0 / params.p
    return result.error / volume(s) ** expo, result
