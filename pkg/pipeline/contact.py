"""
Contact - log-barrier contact, lagged friction and the intersection-free step bound

Primitives: deformable vertex vs half-plane, deformable boundary vertex vs static
facet, static vertex vs deformable boundary facet and, when enabled, boundary vertex
vs non-incident boundary facet of the same body. Deforming edge-edge pairs in 3D are
not modelled.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from models.contact import BarrierParams, ContactPairs, FrictionLag, HalfPlane, StaticMesh
from models.errors import ConfigError, InfeasibleStateError
from models.mesh import BoundarySurface, SimplicialMesh
from pipeline.assembly import project_psd, scatter_gradient, scatter_hessian
from pipeline.distance import (
    closest_on_simplices,
    point_simplex_distance,
    point_simplex_distance_derivatives,
)
from pipeline.spatial import AABBTree

logger = logging.getLogger(__name__)

STEP_FRACTION = 0.9
ADVANCEMENT_ITERS = 50


def barrier(d: np.ndarray, dhat: float) -> np.ndarray:
    """b(d) = -(d - dhat)^2 log(d / dhat) below dhat, 0 above; +inf for d <= 0."""
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    active = (d > 0) & (d < dhat)
    da = d[active]
    out[active] = -((da - dhat) ** 2) * np.log(da / dhat)
    out[d <= 0] = np.inf
    return out


def barrier_first(d: np.ndarray, dhat: float) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    active = (d > 0) & (d < dhat)
    da = d[active]
    out[active] = -2.0 * (da - dhat) * np.log(da / dhat) - (da - dhat) ** 2 / da
    return out


def barrier_second(d: np.ndarray, dhat: float) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    active = (d > 0) & (d < dhat)
    da = d[active]
    out[active] = -2.0 * np.log(da / dhat) - 4.0 * (da - dhat) / da + (da - dhat) ** 2 / da ** 2
    return out


def smoothed_magnitude(y: np.ndarray, eps: float) -> np.ndarray:
    """f0: cubic blend below eps, |y| above."""
    return np.where(y < eps, -y ** 3 / (3.0 * eps ** 2) + y ** 2 / eps + eps / 3.0, y)


def _f1_over_y(y: np.ndarray, eps: float) -> np.ndarray:
    safe = np.where(y > 0, y, 1.0)
    return np.where(y < eps, -y / eps ** 2 + 2.0 / eps, 1.0 / safe)


def _hessian_radial(y: np.ndarray, eps: float) -> np.ndarray:
    """(f1'(y) - f1(y)/y) / y^2 times y, i.e. the coefficient of u u^T / y."""
    safe = np.where(y > 0, y, 1.0)
    return np.where(y < eps, -1.0 / eps ** 2, -1.0 / safe ** 2)


def tangent_basis(normals: np.ndarray) -> np.ndarray:
    """Orthonormal tangents (P, d, d-1) for unit normals (P, d)."""
    if normals.shape[1] == 2:
        return np.stack([-normals[:, 1], normals[:, 0]], axis=1)[:, :, None]
    helper = np.where(np.abs(normals[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    t1 = np.cross(normals, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(normals, t1)
    return np.stack([t1, t2], axis=2)


class ContactModel:
    """Barrier, friction and step filtering for one deformable level against its obstacles."""

    def __init__(self, mesh: SimplicialMesh, boundary: BoundarySurface, colliders: Sequence,
                 params: BarrierParams):
        self.n = mesh.n_vertices
        self.dim = mesh.dim
        self.params = params
        self.boundary = boundary
        self.boundary_vertices = boundary.vertices
        self.planes: List[HalfPlane] = [c for c in colliders if isinstance(c, HalfPlane)]
        statics: List[StaticMesh] = [c for c in colliders if isinstance(c, StaticMesh)]

        positions, facets, facet_mu, vertex_mu = [], [], [], []
        offset = self.n
        for obstacle in statics:
            if obstacle.facets.shape[1] != self.dim:
                raise ConfigError(f"Static obstacle facets do not match a {self.dim}D mesh")
            mu = params.mu if obstacle.friction is None else obstacle.friction
            positions.append(obstacle.vertices[:, :self.dim])
            facets.append(obstacle.facets + offset)
            facet_mu.append(np.full(len(obstacle.facets), mu))
            vertex_mu.append(np.full(len(obstacle.vertices), mu))
            offset += len(obstacle.vertices)
        self.static_positions = np.concatenate(positions) if positions else np.zeros((0, self.dim))
        self.static_facets = np.concatenate(facets) if facets else np.zeros((0, self.dim), dtype=np.int64)
        self.static_facet_mu = np.concatenate(facet_mu) if facet_mu else np.zeros(0)
        self.static_vertex_mu = np.concatenate(vertex_mu) if vertex_mu else np.zeros(0)
        self.plane_mu = np.array([params.mu if p.friction is None else p.friction for p in self.planes])
        self._static_tree = (
            AABBTree.from_simplices(self.static_positions, self.static_facets - self.n)
            if len(self.static_facets) else None
        )

    @property
    def n_dofs(self) -> int:
        return self.n * self.dim

    @property
    def has_obstacles(self) -> bool:
        return bool(self.planes) or len(self.static_facets) > 0 or self.params.self_contact

    def stacked(self, x: np.ndarray) -> np.ndarray:
        return np.vstack([x, self.static_positions]) if len(self.static_positions) else x

    # ------------------------------------------------------------------
    # Pair detection
    # ------------------------------------------------------------------

    def collect(self, x: np.ndarray, radius: float, planes: bool = True) -> ContactPairs:
        """Every pair whose distance is below `radius`, deterministic order."""
        plane_v, plane_id, plane_mu = [], [], []
        for j, plane in enumerate(self.planes if planes else []):
            near = np.nonzero(plane.signed_distance(x) < radius)[0]
            plane_v.append(near)
            plane_id.append(np.full(len(near), j, dtype=np.int64))
            plane_mu.append(np.full(len(near), self.plane_mu[j]))

        X = self.stacked(x)
        points, facets, mus = [], [], []

        def keep_close(p_idx, f_nodes, mu):
            if not len(p_idx):
                return
            dist = point_simplex_distance(X[p_idx], X[f_nodes])
            close = dist < radius
            points.append(p_idx[close])
            facets.append(f_nodes[close])
            mus.append(mu[close])

        bverts = self.boundary_vertices
        if self._static_tree is not None:
            q, f = self._static_tree.query_points(x[bverts], radius)
            keep_close(bverts[q], self.static_facets[f], self.static_facet_mu[f])

        need_body_tree = len(self.static_positions) or self.params.self_contact
        if need_body_tree and self.boundary.n_facets:
            body_tree = AABBTree.from_simplices(x, self.boundary.facets)
            if len(self.static_positions):
                q, f = body_tree.query_points(self.static_positions, radius)
                keep_close(self.n + q, self.boundary.facets[f], self.static_vertex_mu[q])
            if self.params.self_contact:
                q, f = body_tree.query_points(x[bverts], radius)
                p_idx, f_nodes = bverts[q], self.boundary.facets[f]
                incident = np.any(f_nodes == p_idx[:, None], axis=1)
                keep_close(p_idx[~incident], f_nodes[~incident], np.full(int((~incident).sum()), self.params.mu))

        return ContactPairs(
            plane_vertices=np.concatenate(plane_v) if plane_v else np.zeros(0, dtype=np.int64),
            plane_ids=np.concatenate(plane_id) if plane_id else np.zeros(0, dtype=np.int64),
            points=np.concatenate(points) if points else np.zeros(0, dtype=np.int64),
            facets=np.concatenate(facets) if facets else np.zeros((0, self.dim), dtype=np.int64),
            plane_mu=np.concatenate(plane_mu) if plane_mu else np.zeros(0),
            facet_mu=np.concatenate(mus) if mus else np.zeros(0),
        )

    def active_pairs(self, x: np.ndarray) -> ContactPairs:
        return self.collect(x, self.params.dhat)

    def pair_distances(self, x: np.ndarray, pairs: ContactPairs) -> Tuple[np.ndarray, np.ndarray]:
        plane = np.array([self.planes[j].signed_distance(x[v][None])[0]
                          for v, j in zip(pairs.plane_vertices, pairs.plane_ids)])
        X = self.stacked(x)
        facet = point_simplex_distance(X[pairs.points], X[pairs.facets]) if pairs.n_facet else np.zeros(0)
        return plane.reshape(-1), facet

    def min_distance(self, x: np.ndarray, radius: Optional[float] = None) -> float:
        """Smallest pair distance within `radius` (default 10 dhat); inf when nothing is that close."""
        radius = 10.0 * self.params.dhat if radius is None else radius
        values = [np.inf]
        for plane in self.planes:
            values.append(float(plane.signed_distance(x).min()))
        pairs = self.collect(x, radius)
        if pairs.n_facet:
            values.append(float(self.pair_distances(x, pairs)[1].min()))
        return min(values)

    # ------------------------------------------------------------------
    # Barrier
    # ------------------------------------------------------------------

    def barrier_energy(self, x: np.ndarray, pairs: ContactPairs, need_hessian: bool = True, project: bool = True):
        """kappa * sum b(d) with flat gradient and sparse Hessian. Value is +inf when any d <= 0."""
        kappa, dhat = self.params.kappa, self.params.dhat
        grad = np.zeros(self.n_dofs)
        hess = sp.csr_matrix((self.n_dofs, self.n_dofs)) if need_hessian else None
        value = 0.0

        if pairs.n_plane:
            normals = np.array([p.normal for p in self.planes])[pairs.plane_ids]
            offsets = np.array([p.offset for p in self.planes])[pairs.plane_ids]
            d = np.einsum("pi,pi->p", x[pairs.plane_vertices], normals) - offsets
            if np.any(d <= 0):
                return np.inf, grad, hess
            value += kappa * barrier(d, dhat).sum()
            nodes = pairs.plane_vertices[:, None]
            grad += scatter_gradient(nodes, kappa * barrier_first(d, dhat)[:, None] * normals, self.n_dofs)
            if need_hessian:
                local = kappa * barrier_second(d, dhat)[:, None, None] * np.einsum("pi,pj->pij", normals, normals)
                hess = hess + scatter_hessian(nodes, local, self.n_dofs)

        if pairs.n_facet:
            X = self.stacked(x)
            d, g, H = point_simplex_distance_derivatives(X[pairs.points], X[pairs.facets])
            if np.any(d <= 0):
                return np.inf, grad, hess
            value += kappa * barrier(d, dhat).sum()
            nodes = np.concatenate([pairs.points[:, None], pairs.facets], axis=1)
            b1 = barrier_first(d, dhat)
            grad += scatter_gradient(nodes, kappa * b1[:, None] * g, self.n_dofs)
            if need_hessian:
                b2 = barrier_second(d, dhat)
                local = kappa * (b2[:, None, None] * np.einsum("pi,pj->pij", g, g) + b1[:, None, None] * H)
                if project:
                    local = project_psd(local)
                hess = hess + scatter_hessian(nodes, local, self.n_dofs)
        return float(value), grad, hess

    # ------------------------------------------------------------------
    # Friction
    # ------------------------------------------------------------------

    def friction_lag(self, x_lag: np.ndarray) -> FrictionLag:
        """Freeze pairs, normal forces and tangent frames at `x_lag`."""
        kappa, dhat = self.params.kappa, self.params.dhat
        pairs = self.active_pairs(x_lag)
        keep_plane = pairs.plane_mu > 0
        keep_facet = pairs.facet_mu > 0
        pairs = ContactPairs(
            plane_vertices=pairs.plane_vertices[keep_plane], plane_ids=pairs.plane_ids[keep_plane],
            points=pairs.points[keep_facet], facets=pairs.facets[keep_facet],
            plane_mu=pairs.plane_mu[keep_plane], facet_mu=pairs.facet_mu[keep_facet],
        )
        d_plane, d_facet = self.pair_distances(x_lag, pairs)
        normals = np.array([p.normal for p in self.planes]).reshape(-1, self.dim)[pairs.plane_ids] \
            if pairs.n_plane else np.zeros((0, self.dim))

        X = self.stacked(x_lag)
        if pairs.n_facet:
            closest, weights = closest_on_simplices(X[pairs.points], X[pairs.facets])
            offset = X[pairs.points] - closest
            facet_normals = offset / np.linalg.norm(offset, axis=1, keepdims=True)
        else:
            weights = np.zeros((0, self.dim))
            facet_normals = np.zeros((0, self.dim))

        return FrictionLag(
            pairs=pairs,
            plane_force=kappa * np.abs(barrier_first(d_plane, dhat)),
            plane_basis=tangent_basis(normals) if pairs.n_plane else np.zeros((0, self.dim, self.dim - 1)),
            facet_force=kappa * np.abs(barrier_first(d_facet, dhat)),
            facet_weights=weights,
            facet_basis=tangent_basis(facet_normals) if pairs.n_facet else np.zeros((0, self.dim, self.dim - 1)),
            x_lag=np.array(x_lag, copy=True),
        )

    def _tangent_operators(self, lag: FrictionLag):
        """Per pair: node stack (P, 1+m) and the linear map A (P, d-1, (1+m)d) with u = A dz."""
        d = self.dim
        groups = []
        pairs = lag.pairs
        if pairs.n_plane:
            A = np.swapaxes(lag.plane_basis, 1, 2)
            groups.append((pairs.plane_vertices[:, None], A, pairs.plane_mu * lag.plane_force))
        if pairs.n_facet:
            m = pairs.facets.shape[1]
            P = pairs.n_facet
            gamma = np.zeros((P, d, (1 + m) * d))
            eye = np.eye(d)
            gamma[:, :, :d] = eye
            for j in range(m):
                gamma[:, :, d * (1 + j):d * (2 + j)] = -lag.facet_weights[:, j, None, None] * eye
            A = np.einsum("pdk,pdc->pkc", lag.facet_basis, gamma)
            nodes = np.concatenate([pairs.points[:, None], pairs.facets], axis=1)
            groups.append((nodes, A, pairs.facet_mu * lag.facet_force))
        return groups

    def friction_potential(self, x: np.ndarray, lag: FrictionLag, h: float, need_hessian: bool = True):
        """sum mu lambda f0(||u||) with u the tangential displacement since the lag state."""
        eps = self.params.eps_v * h
        grad = np.zeros(self.n_dofs)
        hess = sp.csr_matrix((self.n_dofs, self.n_dofs)) if need_hessian else None
        value = 0.0
        if lag.is_empty:
            return value, grad, hess
        X = self.stacked(x)
        X_lag = self.stacked(lag.x_lag)
        for nodes, A, weight in self._tangent_operators(lag):
            dz = (X[nodes] - X_lag[nodes]).reshape(len(nodes), -1)
            u = np.einsum("pkc,pc->pk", A, dz)
            y = np.linalg.norm(u, axis=1)
            value += float(np.sum(weight * smoothed_magnitude(y, eps)))
            f1y = _f1_over_y(y, eps)
            grad += scatter_gradient(nodes, np.einsum("pkc,pk->pc", A, (weight * f1y)[:, None] * u), self.n_dofs)
            if need_hessian:
                radial = _hessian_radial(y, eps)
                safe = np.where(y > 0, y, 1.0)
                uu = np.einsum("pi,pj->pij", u, u) / safe[:, None, None]
                uu[y == 0] = 0.0
                k = u.shape[1]
                Hu = weight[:, None, None] * (f1y[:, None, None] * np.eye(k) + radial[:, None, None] * uu)
                local = np.einsum("pkc,pkl,pld->pcd", A, Hu, A)
                hess = hess + scatter_hessian(nodes, local, self.n_dofs)
        return value, grad, hess

    # ------------------------------------------------------------------
    # Step filter
    # ------------------------------------------------------------------

    def feasible_step_upper_bound(self, x: np.ndarray, dx: np.ndarray) -> float:
        """
        Largest alpha in (0, 1] such that x + alpha dx keeps every candidate distance positive,
        shrunk by STEP_FRACTION. Conservative advancement per pair.
        """
        dx = np.asarray(dx, dtype=np.float64).reshape(x.shape)
        alpha = 1.0
        if not np.any(dx):
            return alpha
        cap = 1.0 / STEP_FRACTION

        for plane in self.planes:
            d0 = plane.signed_distance(x)
            if np.any(d0 <= 0):
                raise InfeasibleStateError(f"Vertex {int(np.argmin(d0))} is on or below a half-plane")
            rate = -(dx @ plane.normal)
            approaching = rate > 0
            if np.any(approaching):
                alpha = min(alpha, STEP_FRACTION * float((d0[approaching] / rate[approaching]).min()))

        reach = float(np.linalg.norm(dx, axis=1).max())
        if len(self.static_facets) or self.params.self_contact:
            pairs = self.collect(x, self.params.dhat + 2.0 * reach, planes=False)
            if pairs.n_facet:
                X = self.stacked(x)
                DX = np.vstack([dx, np.zeros_like(self.static_positions)]) if len(self.static_positions) else dx
                p, f = pairs.points, pairs.facets
                dist0 = point_simplex_distance(X[p], X[f])
                if np.any(dist0 <= 0):
                    raise InfeasibleStateError("Current state has a zero contact distance")
                rate = np.linalg.norm(DX[p], axis=1) + np.linalg.norm(DX[f], axis=2).max(axis=1)
                toi = np.full(len(p), cap)
                moving = rate > 0
                t = np.zeros(len(p))
                for _ in range(ADVANCEMENT_ITERS):
                    live = moving & (t < cap)
                    if not np.any(live):
                        break
                    dist = point_simplex_distance(X[p[live]] + t[live, None] * DX[p[live]],
                                                  X[f[live]] + t[live, None, None] * DX[f[live]])
                    t[live] = t[live] + dist / rate[live]
                toi[moving] = np.minimum(t[moving], cap)
                alpha = min(alpha, STEP_FRACTION * float(toi.min()))

        return max(min(alpha, 1.0), np.finfo(float).tiny)


def contact_pairs(x: np.ndarray, mesh: SimplicialMesh, boundary: BoundarySurface, colliders: Sequence,
                  params: BarrierParams) -> ContactPairs:
    """Pairs closer than dhat; see ContactModel.collect."""
    return ContactModel(mesh, boundary, colliders, params).active_pairs(x)
