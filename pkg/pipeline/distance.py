"""
Distance - point to segment / triangle distances with analytic derivatives

All routines are vectorized over a batch of (point, simplex) pairs. A simplex is
given by its corners, shape (P, m, d) with m = 2 (segment) or 3 (triangle).
Derivatives are taken with respect to the stacked local coordinates
[p, s_0, ..., s_{m-1}], i.e. a vector of length (1 + m) * d.
"""

import logging
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)


def _clamp_segment(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.einsum("ij,ij->i", points - a, ab) / np.where(denom > 0, denom, 1.0)
    return np.clip(t, 0.0, 1.0)


def closest_on_simplices(points: np.ndarray, corners: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closest point on each simplex and its barycentric weights.

    Weights of corners outside the active region are exactly zero.
    """
    points = np.asarray(points, dtype=np.float64)
    corners = np.asarray(corners, dtype=np.float64)
    n, m = corners.shape[0], corners.shape[1]
    bary = np.zeros((n, m))
    if n == 0:
        return np.zeros_like(points), bary

    if m == 2:
        t = _clamp_segment(points, corners[:, 0], corners[:, 1])
        bary[:, 0], bary[:, 1] = 1.0 - t, t
        bary[t == 0.0, 1] = 0.0
        bary[t == 1.0, 0] = 0.0
    elif m == 3:
        s0 = corners[:, 0]
        E = np.stack([corners[:, 1] - s0, corners[:, 2] - s0], axis=2)  # (n, d, 2)
        G = np.einsum("nik,nil->nkl", E, E)
        rhs = np.einsum("nik,ni->nk", E, points - s0)
        y = np.linalg.solve(G, rhs[..., None])[..., 0]
        face = (y[:, 0] >= 0) & (y[:, 1] >= 0) & (y.sum(axis=1) <= 1)
        bary[face, 0] = 1.0 - y[face].sum(axis=1)
        bary[face, 1:] = y[face]

        rest = np.nonzero(~face)[0]
        if len(rest):
            best = np.full(len(rest), np.inf)
            p = points[rest]
            for i, j in ((0, 1), (1, 2), (2, 0)):
                a, b = corners[rest, i], corners[rest, j]
                t = _clamp_segment(p, a, b)
                q = a + t[:, None] * (b - a)
                dist = np.einsum("ij,ij->i", p - q, p - q)
                better = dist < best
                best[better] = dist[better]
                rows = rest[better]
                bary[rows] = 0.0
                bary[rows, i] = 1.0 - t[better]
                bary[rows, j] = t[better]
    else:
        raise ValueError(f"Unsupported simplex size {m}")

    closest = np.einsum("nm,nmd->nd", bary, corners)
    return closest, bary


def point_simplex_distance(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    closest, _ = closest_on_simplices(points, corners)
    return np.linalg.norm(points - closest, axis=1)


def _projection_derivatives(u: np.ndarray, E: np.ndarray):
    """
    Squared distance from u to span(E) with derivatives in w = [u, E columns].

    u: (P, d), E: (P, d, k). Returns D (P,), g (P, nw), H (P, nw, nw) with nw = d * (1 + k).
    """
    P, d = u.shape
    k = E.shape[2]
    nw = d * (1 + k)
    if k:
        G = np.einsum("pik,pil->pkl", E, E)
        Ginv = np.linalg.inv(G)
        y = np.einsum("pkl,pl->pk", Ginv, np.einsum("pik,pi->pk", E, u))
        r = u - np.einsum("pik,pk->pi", E, y)
    else:
        Ginv = np.zeros((P, 0, 0))
        y = np.zeros((P, 0))
        r = u.copy()

    D = np.einsum("pi,pi->p", r, r)
    g = np.zeros((P, nw))
    g[:, :d] = 2.0 * r
    for j in range(k):
        g[:, d * (1 + j):d * (2 + j)] = -2.0 * r * y[:, j:j + 1]

    H = np.zeros((P, nw, nw))
    for col in range(nw):
        du = np.zeros((P, d))
        dE = np.zeros((P, d, k))
        if col < d:
            du[:, col] = 1.0
        else:
            j, i = divmod(col - d, d)
            dE[:, i, j] = 1.0
        if k:
            rhs = (
                np.einsum("pik,pi->pk", E, du)
                + np.einsum("pik,pi->pk", dE, r)
                - np.einsum("pik,pi->pk", E, np.einsum("pik,pk->pi", dE, y))
            )
            dy = np.einsum("pkl,pl->pk", Ginv, rhs)
            dr = du - np.einsum("pik,pk->pi", dE, y) - np.einsum("pik,pk->pi", E, dy)
        else:
            dy = np.zeros((P, 0))
            dr = du
        H[:, :d, col] = 2.0 * dr
        for j in range(k):
            H[:, d * (1 + j):d * (2 + j), col] = -2.0 * (dr * y[:, j:j + 1] + r * dy[:, j:j + 1])
    return D, g, H


def _chain_matrix(d: int, k: int) -> np.ndarray:
    """J with w = J z, z = [p, s0, s_1..s_k] and w = [p - s0, s_1 - s0, ...]."""
    eye = np.eye(d)
    J = np.zeros((d * (1 + k), d * (2 + k)))
    J[:d, :d] = eye
    J[:d, d:2 * d] = -eye
    for j in range(k):
        J[d * (1 + j):d * (2 + j), d:2 * d] = -eye
        J[d * (1 + j):d * (2 + j), d * (2 + j):d * (3 + j)] = eye
    return J


def point_simplex_sqdist_derivatives(points: np.ndarray, corners: np.ndarray):
    """
    Squared distance with gradient and Hessian in local coordinates [p, s_0, ..., s_{m-1}].

    The active region (vertex, edge or face) is taken from the closest point. Returns
    D (P,), g (P, (1+m)d), H (P, (1+m)d, (1+m)d).
    """
    points = np.asarray(points, dtype=np.float64)
    corners = np.asarray(corners, dtype=np.float64)
    P, m, d = corners.shape
    n_local = (1 + m) * d
    D = np.zeros(P)
    g = np.zeros((P, n_local))
    H = np.zeros((P, n_local, n_local))
    if P == 0:
        return D, g, H

    _, bary = closest_on_simplices(points, corners)
    active = bary != 0.0
    # group pairs by their active corner pattern
    patterns, inverse = np.unique(active, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    for pid, pattern in enumerate(patterns):
        rows = np.nonzero(inverse == pid)[0]
        idx = np.nonzero(pattern)[0]
        k = len(idx) - 1
        s0 = corners[rows, idx[0]]
        u = points[rows] - s0
        E = np.stack([corners[rows, j] - s0 for j in idx[1:]], axis=2) if k else np.zeros((len(rows), d, 0))
        Dk, gw, Hw = _projection_derivatives(u, E)
        J = _chain_matrix(d, k)
        gz = gw @ J
        Hz = np.einsum("ab,pbc,cd->pad", J.T, Hw, J)

        # scatter [p, active corners] into the full local layout
        slots = np.concatenate([np.arange(d)] + [d * (1 + c) + np.arange(d) for c in idx])
        D[rows] = Dk
        g[np.ix_(rows, slots)] = gz
        H[np.ix_(rows, slots, slots)] = Hz
    return D, g, H


def point_simplex_distance_derivatives(points: np.ndarray, corners: np.ndarray):
    """Unsquared distance with gradient and Hessian, chained from the squared form."""
    D, gD, HD = point_simplex_sqdist_derivatives(points, corners)
    dist = np.sqrt(D)
    safe = np.where(dist > 0, dist, 1.0)
    g = gD / (2.0 * safe[:, None])
    H = HD / (2.0 * safe[:, None, None]) - np.einsum("pi,pj->pij", gD, gD) / (4.0 * safe[:, None, None] ** 3)
    return dist, g, H


def segment_ray_hits(origins: np.ndarray, directions: np.ndarray, a: np.ndarray, b: np.ndarray, tol: float = 1e-12):
    """
    2D half-line vs segment. Returns ray parameters t (inf for misses).

    Broadcasts origins/directions (R, 2) against segments (F, 2) to (R, F).
    """
    o, r = origins[:, None, :], directions[:, None, :]
    s = (b - a)[None, :, :]
    cross = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]
    diff = a[None, :, :] - o
    scale = np.maximum(np.linalg.norm(s, axis=2), 1.0)
    parallel = np.abs(cross) <= tol * scale
    denom = np.where(parallel, 1.0, cross)
    t = (diff[..., 0] * s[..., 1] - diff[..., 1] * s[..., 0]) / denom
    v = (diff[..., 0] * r[..., 1] - diff[..., 1] * r[..., 0]) / denom
    hit = (~parallel) & (t >= -tol) & (v >= -tol) & (v <= 1.0 + tol)
    return np.where(hit, np.maximum(t, 0.0), np.inf)


def triangle_ray_hits(origins: np.ndarray, directions: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray, tol: float = 1e-12):
    """
    3D half-line vs triangle (Moller-Trumbore). Returns ray parameters t (inf for misses),
    shape (R, F). Edge and vertex grazes count as hits.
    """
    o, dvec = origins[:, None, :], directions[:, None, :]
    e1 = (b - a)[None]
    e2 = (c - a)[None]
    pvec = np.cross(dvec, e2)
    det = (e1 * pvec).sum(axis=2)
    scale = np.maximum(np.linalg.norm(e1, axis=2) * np.linalg.norm(e2, axis=2), 1.0)
    parallel = np.abs(det) <= tol * scale
    inv = 1.0 / np.where(parallel, 1.0, det)
    tvec = o - a[None]
    u = (tvec * pvec).sum(axis=2) * inv
    qvec = np.cross(tvec, e1)
    v = (dvec * qvec).sum(axis=2) * inv
    t = (e2 * qvec).sum(axis=2) * inv
    hit = (~parallel) & (u >= -tol) & (v >= -tol) & (u + v <= 1.0 + tol) & (t >= -tol)
    return np.where(hit, np.maximum(t, 0.0), np.inf)
