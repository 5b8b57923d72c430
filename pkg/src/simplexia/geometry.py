"""Simplices in R^d: measures, generators, canonical frames, serialization.

A simplex is stored as a (d+1, d) array of vertex rows.  All operations in
this module are pure functions; random generators take an explicit seed.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.linalg import helmert


class DegenerateSimplexError(ValueError):
    """Raised when a simplex is (numerically) flat and the operation needs volume."""


class DimensionMismatchError(ValueError):
    """Raised when two operands live in different ambient dimensions."""


@dataclass(frozen=True)
class Simplex:
    """A d-dimensional simplex given by d+1 vertex rows in R^d."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[0] != verts.shape[1] + 1:
            raise ValueError(
                f"expected a (d+1, d) vertex array, got shape {verts.shape}"
            )
        if verts.shape[1] < 1:
            raise ValueError("ambient dimension must be at least 1")
        if not np.all(np.isfinite(verts)):
            raise ValueError("vertex coordinates must be finite")
        if _edge_det(verts) == 0.0:
            raise DegenerateSimplexError("simplex vertices are affinely dependent")
        verts.flags.writeable = False
        object.__setattr__(self, "vertices", verts)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "vertices": self.vertices.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Simplex":
        verts = np.asarray(data["vertices"], dtype=float)
        s = cls(verts)
        if "dim" in data and int(data["dim"]) != s.dim:
            raise ValueError(
                f"declared dim {data['dim']} does not match vertices of dim {s.dim}"
            )
        return s

    @classmethod
    def from_json(cls, text: str) -> "Simplex":
        return cls.from_dict(json.loads(text))


def _edge_det(verts: np.ndarray) -> float:
    return float(np.linalg.det(verts[1:] - verts[0]))


def volume(s: Simplex) -> float:
    """d-dimensional volume, |det of edge vectors| / d!."""
    det = _edge_det(s.vertices)
    if det == 0.0:
        raise DegenerateSimplexError("simplex has zero volume")
    return abs(det) / factorial(s.dim)


def volume_of_vertices(verts: np.ndarray) -> float:
    """Volume from a raw (m, d) vertex array (no validation)."""
    verts = np.asarray(verts, dtype=float)
    return abs(float(np.linalg.det(verts[1:] - verts[0]))) / factorial(verts.shape[1])


def edge_lengths(s: Simplex) -> np.ndarray:
    """All (d+1)d/2 pairwise vertex distances, unsorted."""
    verts = s.vertices
    pairs = list(itertools.combinations(range(len(verts)), 2))
    return np.array([np.linalg.norm(verts[i] - verts[j]) for i, j in pairs])


def diameter(s: Simplex) -> float:
    """Longest edge; for a simplex this is the set diameter."""
    return float(edge_lengths(s).max())


def regular_unit_simplex(d: int) -> Simplex:
    """Regular simplex of unit volume, centered at the origin.

    Built from d+1 mutually equidistant points (an orthonormal projection of
    the standard-basis simplex in R^{d+1}), then rescaled to unit volume.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    verts = helmert(d + 1).T  # rows mutually equidistant, centroid 0
    vol = volume_of_vertices(verts)
    return Simplex(verts / vol ** (1.0 / d))


# Redraw threshold: reject a Gaussian draw whose volume is below this multiple
# of (RMS edge)^d, to keep downstream condition numbers bounded.
_DEGENERACY_REDRAW = 1e-6


def random_unit_simplex(d: int, seed: int) -> Simplex:
    """Random unit-volume simplex: Gaussian vertices, centroid-centered, rescaled.

    Deterministic per (d, seed); near-degenerate draws are rejected and redrawn.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    while True:
        verts = rng.standard_normal((d + 1, d))
        verts -= verts.mean(axis=0)
        vol = volume_of_vertices(verts)
        sq = 0.0
        npairs = 0
        for i, j in itertools.combinations(range(d + 1), 2):
            sq += float(((verts[i] - verts[j]) ** 2).sum())
            npairs += 1
        rms_edge = np.sqrt(sq / npairs)
        if vol >= _DEGENERACY_REDRAW * rms_edge**d:
            break
    return Simplex(verts / vol ** (1.0 / d))


def normalized_to_unit_volume(s: Simplex) -> Simplex:
    """Rescale about the centroid so the volume becomes 1."""
    vol = volume(s)
    if abs(vol - 1.0) < 1e-14:
        return s
    g = s.centroid()
    return Simplex(g + (s.vertices - g) / vol ** (1.0 / s.dim))


@dataclass(frozen=True)
class CanonicalFrame:
    """Coordinates of a simplex with a chosen vertex pair on the first axis.

    The pair sits at (-delta, 0, ..., 0) and (delta, 0, ..., 0); the remaining
    vertices have first coordinates ``b`` and an upper-triangular tail ``A``
    (column j holds the nonzero tail of the j-th remaining vertex, with
    positive diagonal).  ``rotation``/``translation`` give the rigid motion:
    frame coordinates are (x - translation) @ rotation.
    """

    delta: float
    b: np.ndarray  # (d-1,)
    A: np.ndarray  # (d-1, d-1) upper triangular, positive diagonal
    rotation: np.ndarray  # (d, d) orthogonal
    translation: np.ndarray  # (d,)
    vertex_order: tuple  # original indices in frame order (pair first)

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    def frame_vertices(self) -> np.ndarray:
        """Vertex rows in frame coordinates: pair first, then the tail vertices."""
        d = self.dim
        verts = np.zeros((d + 1, d))
        verts[0, 0] = -self.delta
        verts[1, 0] = self.delta
        for j in range(d - 1):
            verts[2 + j, 0] = self.b[j]
            verts[2 + j, 1:] = self.A[:, j]
        return verts

    def to_frame(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.translation) @ self.rotation

    def from_frame(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation


def canonicalize(s: Simplex, pair: tuple[int, int]) -> CanonicalFrame:
    """Rigid motion placing the vertex pair at (+-delta, 0, ...) and the rest
    in upper-triangular coordinates (QR reduction of the vertex offsets)."""
    i, j = pair
    n = s.dim + 1
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"pair must be two distinct vertex indices, got {pair}")
    verts = s.vertices
    rest = [k for k in range(n) if k not in (i, j)]
    mid = 0.5 * (verts[i] + verts[j])
    cols = np.column_stack([verts[j] - mid] + [verts[k] - mid for k in rest])
    q, r = np.linalg.qr(cols)
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    q = q * signs  # flip columns so the triangular diagonal is positive
    r = signs[:, None] * r
    scale = float(np.abs(r).max())
    if np.abs(np.diag(r)).min() <= 1e-13 * max(scale, 1e-300):
        raise DegenerateSimplexError("simplex too flat to canonicalize")
    return CanonicalFrame(
        delta=float(r[0, 0]),
        b=r[0, 1:].copy(),
        A=np.triu(r[1:, 1:]),
        rotation=q,
        translation=mid.copy(),
        vertex_order=(i, j, *rest),
    )


def shape_distance(s: Simplex, t: Simplex) -> float:
    """Distance between sorted edge-length vectors after volume normalization.

    Zero for congruent simplices (any motion, any vertex labeling); cheap
    convergence monitor, not a true metric on shape space.
    """
    if s.dim != t.dim:
        raise DimensionMismatchError(f"dimensions differ: {s.dim} vs {t.dim}")
    d = s.dim
    ls = np.sort(edge_lengths(s)) / volume(s) ** (1.0 / d)
    lt = np.sort(edge_lengths(t)) / volume(t) ** (1.0 / d)
    return float(np.linalg.norm(ls - lt))


@lru_cache(maxsize=None)
def _proper_subsets(m: int) -> tuple:
    out = []
    for size in range(1, m + 1):
        out.extend(itertools.combinations(range(m), size))
    return tuple(out)


def point_simplex_distance2(point: np.ndarray, verts: np.ndarray) -> float:
    """Squared Euclidean distance from a point to the simplex conv(verts).

    Enumerates faces, projects onto each affine hull, and keeps the feasible
    candidates; exact for the small dimensions used here.
    """
    point = np.asarray(point, dtype=float)
    verts = np.asarray(verts, dtype=float)
    best = np.inf
    for subset in _proper_subsets(verts.shape[0]):
        v = verts[list(subset)]
        if len(subset) == 1:
            d2 = float(((point - v[0]) ** 2).sum())
        else:
            edges = v[1:] - v[0]
            gram = edges @ edges.T
            try:
                mu = np.linalg.solve(gram, edges @ (point - v[0]))
            except np.linalg.LinAlgError:
                continue
            if mu.min() < -1e-12 or mu.sum() > 1 + 1e-12:
                continue
            proj = v[0] + mu @ edges
            d2 = float(((point - proj) ** 2).sum())
        if d2 < best:
            best = d2
    return max(best, 0.0)


def closest_point_in_simplex(point: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Euclidean projection of a point onto the simplex conv(verts)."""
    point = np.asarray(point, dtype=float)
    verts = np.asarray(verts, dtype=float)
    best = np.inf
    best_point = verts[0]
    for subset in _proper_subsets(verts.shape[0]):
        v = verts[list(subset)]
        if len(subset) == 1:
            cand = v[0]
        else:
            edges = v[1:] - v[0]
            gram = edges @ edges.T
            try:
                mu = np.linalg.solve(gram, edges @ (point - v[0]))
            except np.linalg.LinAlgError:
                continue
            if mu.min() < -1e-12 or mu.sum() > 1 + 1e-12:
                continue
            cand = v[0] + mu @ edges
        d2 = float(((point - cand) ** 2).sum())
        if d2 < best:
            best = d2
            best_point = cand
    return best_point
