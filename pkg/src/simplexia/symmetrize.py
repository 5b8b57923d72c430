"""Volume-preserving symmetrization of a simplex about a vertex pair.

Given a unit-volume simplex with a vertex pair that the remaining vertices
see asymmetrically, the construction produces another unit-volume simplex
whose normalized approximation error is smaller by a certified factor
D^{1/d}, where D - 1 measures the asymmetry.  All intermediate matrices are
exposed for verification.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .geometry import (
    CanonicalFrame,
    Simplex,
    canonicalize,
    normalized_to_unit_volume,
    shape_distance,
    regular_unit_simplex,
    volume,
)

# A pair counts as symmetric when |y|^2 is below this; the improvement
# factor differs from 1 by about |y|^2 / d, i.e. below noise.
SYMMETRY_TOL = 1e-14


@dataclass
class SymmetrizationReport:
    """Full trace of one symmetrization step."""

    pair: tuple[int, int]
    frame: CanonicalFrame
    y: np.ndarray
    D: np.ndarray
    U: np.ndarray
    Qdiag: np.ndarray
    Ubar: np.ndarray
    M: np.ndarray
    h: np.ndarray
    S: np.ndarray
    Shat: np.ndarray
    F: np.ndarray
    T_tilde: Simplex
    T_hat: Simplex
    T_star: Simplex
    factor: float

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "delta": self.frame.delta,
            "b": self.frame.b.tolist(),
            "A": self.frame.A.tolist(),
            "y": self.y.tolist(),
            "D": self.D.tolist(),
            "U": self.U.tolist(),
            "Qdiag": self.Qdiag.tolist(),
            "Ubar": self.Ubar.tolist(),
            "M": self.M.tolist(),
            "h": self.h.tolist(),
            "S": self.S.tolist(),
            "Shat": self.Shat.tolist(),
            "F": self.F.tolist(),
            "T_tilde": self.T_tilde.to_dict(),
            "T_hat": self.T_hat.to_dict(),
            "T_star": self.T_star.to_dict(),
            "factor": self.factor,
        }


def compute_y(frame: CanonicalFrame) -> np.ndarray:
    """y = b A^{-1} by triangular back-substitution."""
    if frame.A.shape[0] == 0:
        return np.zeros(0)
    diag = np.abs(np.diag(frame.A))
    if diag.min() <= 1e-300:
        raise np.linalg.LinAlgError("triangular factor is singular")
    return solve_triangular(frame.A, frame.b, trans="T", lower=False)


def gram_determinants(y: np.ndarray) -> np.ndarray:
    """D_k = det(I_k + y_k^t y_k) for k = 1..len(y), by direct determinants."""
    y = np.asarray(y, dtype=float)
    out = np.empty(len(y))
    for k in range(1, len(y) + 1):
        yk = y[:k]
        out[k - 1] = np.linalg.det(np.eye(k) + np.outer(yk, yk))
    return out


def cholesky_R(y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cholesky data of R = y^t y + I: upper factor U with U^t U = R, its
    diagonal, and the unit upper-triangular Ubar = diag(U)^{-1} U.

    Checks the diagonal identity u_jj = sqrt(D_j / D_{j-1}) as a guard
    against loss of positivity.
    """
    y = np.asarray(y, dtype=float)
    k = len(y)
    if k == 0:
        empty = np.zeros((0, 0))
        return empty, np.zeros(0), empty
    r_mat = np.outer(y, y) + np.eye(k)
    try:
        u_mat = np.linalg.cholesky(r_mat).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"Cholesky lost positivity; residual matrix:\n{r_mat}"
        ) from exc
    qdiag = np.diag(u_mat).copy()
    dets = gram_determinants(y)
    ratios = np.sqrt(dets / np.concatenate([[1.0], dets[:-1]]))
    if not np.allclose(qdiag, ratios, rtol=1e-8, atol=1e-10):
        raise np.linalg.LinAlgError(
            "Cholesky diagonal disagrees with determinant ratios: "
            f"{qdiag} vs {ratios}"
        )
    ubar = u_mat / qdiag[:, None]
    return u_mat, qdiag, ubar


def build_T_tilde(frame: CanonicalFrame, m_mat: np.ndarray) -> Simplex:
    """Simplex with the pair fixed and the remaining vertices moved into the
    first-coordinate-zero plane, tails given by the columns of M = Ubar A."""
    d = frame.dim
    verts = np.zeros((d + 1, d))
    verts[0, 0] = -frame.delta
    verts[1, 0] = frame.delta
    for j in range(d - 1):
        verts[2 + j, 1:] = m_mat[:, j]
    return Simplex(verts)


def _t_hat(frame: CanonicalFrame) -> Simplex:
    """Mirror of the frame simplex: remaining vertices get negated first
    coordinates (congruent to the original)."""
    verts = frame.frame_vertices().copy()
    verts[2:, 0] *= -1.0
    return Simplex(verts)


def build_transforms(
    frame: CanonicalFrame, ubar: np.ndarray, h: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The block transforms S, Shat (mapping the flattened simplex back to
    the original and its mirror) and the determinant-one diagonal scaling F."""
    d = frame.dim
    s_mat = np.eye(d)
    shat = np.eye(d)
    if d > 1:
        ubar_inv = solve_triangular(ubar, np.eye(d - 1), lower=False)
        s_mat[0, 1:] = h
        s_mat[1:, 1:] = ubar_inv
        shat[0, 1:] = -h
        shat[1:, 1:] = ubar_inv
    y = compute_y(frame)
    dets = gram_determinants(y)
    d_last = dets[-1] if len(dets) else 1.0
    diag = np.empty(d)
    diag[0] = 1.0
    prev = 1.0
    for j in range(1, d):
        diag[j] = np.sqrt(prev / dets[j - 1])
        prev = dets[j - 1]
    f_mat = np.diag(d_last ** (1.0 / (2.0 * d)) * diag)
    return s_mat, shat, f_mat


def _pair_asymmetry(s: Simplex, pair: tuple[int, int]) -> tuple[float, CanonicalFrame, np.ndarray]:
    frame = canonicalize(s, pair)
    y = compute_y(frame)
    return 1.0 + float(y @ y), frame, y


def symmetrize_step(
    s: Simplex,
    pair_policy: str | tuple[int, int] = "max-factor",
) -> SymmetrizationReport:
    """One symmetrization step on a unit-volume simplex (normalized here if
    needed).

    pair_policy: "max-factor" scans all vertex pairs and takes the one with
    the largest certified factor; "first-asymmetric" takes the first pair
    above the symmetry tolerance; an explicit (i, j) tuple forces the pair.
    If every pair is symmetric the factor is 1 and the output is congruent
    to the input.
    """
    s = normalized_to_unit_volume(s)
    n = s.dim + 1
    if isinstance(pair_policy, tuple):
        candidates = [tuple(pair_policy)]
    else:
        candidates = list(itertools.combinations(range(n), 2))

    best = None
    for pair in candidates:
        d_last, frame, y = _pair_asymmetry(s, pair)
        if best is None or d_last > best[0]:
            best = (d_last, pair, frame, y)
        if pair_policy == "first-asymmetric" and d_last > 1.0 + SYMMETRY_TOL:
            best = (d_last, pair, frame, y)
            break
    d_last, pair, frame, y = best

    if d_last <= 1.0 + SYMMETRY_TOL and not isinstance(pair_policy, tuple):
        y = np.zeros_like(y)

    u_mat, qdiag, ubar = cholesky_R(y)
    dets = gram_determinants(y)
    a_mat = frame.A
    m_mat = ubar @ a_mat if a_mat.shape[0] else a_mat
    if m_mat.shape[0]:
        h = solve_triangular(m_mat, frame.b, trans="T", lower=False)
    else:
        h = np.zeros(0)
    s_mat, shat_mat, f_mat = build_transforms(frame, ubar, h)
    t_tilde = build_T_tilde(frame, m_mat)
    t_hat = _t_hat(frame)
    t_star = Simplex(t_tilde.vertices / np.diag(f_mat))
    factor = (dets[-1] if len(dets) else 1.0) ** (1.0 / s.dim)
    return SymmetrizationReport(
        pair=pair,
        frame=frame,
        y=y,
        D=dets,
        U=u_mat,
        Qdiag=qdiag,
        Ubar=ubar,
        M=m_mat,
        h=h,
        S=s_mat,
        Shat=shat_mat,
        F=f_mat,
        T_tilde=t_tilde,
        T_hat=t_hat,
        T_star=t_star,
        factor=float(factor),
    )


def symmetrize_iterate(
    s: Simplex,
    max_iters: int = 50,
    stop_tol: float = 1e-12,
    params=None,
    tol: float = 1e-7,
) -> list[tuple[Simplex, float, float]]:
    """Repeated symmetrization steps.

    Returns one (simplex, factor, sigma) triple per iterate, starting with
    the input; sigma is computed when params is given (and is NaN
    otherwise).  Stops when the best available factor drops below
    1 + stop_tol.
    """
    from .approx import sigma as sigma_fn

    current = normalized_to_unit_volume(s)

    def measure(simplex):
        if params is None:
            return float("nan")
        return sigma_fn(simplex, params, tol)

    trace = [(current, 1.0, measure(current))]
    for _ in range(max_iters):
        report = symmetrize_step(current)
        if report.factor <= 1.0 + stop_tol:
            break
        current = report.T_star
        trace.append((current, report.factor, measure(current)))
    return trace


def distance_to_regular(s: Simplex) -> float:
    """Shape distance from the simplex to the regular one of its dimension."""
    return shape_distance(s, regular_unit_simplex(s.dim))
