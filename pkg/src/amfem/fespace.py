"""Lowest-order finite element spaces on a triangulation.

RTSpace   flux space: per triangle a + c*x, normal component continuous
          across edges; one degree of freedom per edge, the total normal
          flux integral with respect to the global edge normal (the tangent
          a -> b for a < b rotated by -90 degrees).
P0Space   piecewise constants, one dof per live triangle (live order).
P1Space   continuous piecewise linears, one dof per vertex.

The local flux basis attached to edge i (opposite vertex P_i) of triangle T
is s * (x - P_i) / (2|T|), where s = +1 when T lies left of the edge
tangent; its flux through its own edge is 1 and through the other two edges
is identically zero, so the divergence matrix has entries +-1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import quadrature
from .mesh import Mesh, ancestor_map
from .sources import as_source

__all__ = ["RTSpace", "P0Space", "P1Space", "DofVector",
           "eval_rt", "div_rt", "rot_rt", "l2_project", "interpolate_rt",
           "prolongate", "curl_p1", "grad_h",
           "rt_mass_matrix", "div_matrix", "dof_to_text", "dof_from_text"]


class RTSpace:
    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.ndof = mesh.ne
        self._mass = None
        self._mass_lu = None

    def opp_coords(self):
        """(nl, 3, 2) coordinates of the vertex opposite each local edge."""
        return self.mesh.points[self.mesh.tri_verts[self.mesh.live]]


class P0Space:
    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.ndof = mesh.nt


class P1Space:
    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.ndof = mesh.nv


_KINDS = ("RT", "P0", "P1")


@dataclass(frozen=True)
class DofVector:
    """Coefficient vector tagged with its space kind and mesh."""
    kind: str
    values: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError("unknown space tag %r" % self.kind)
        expected = {"RT": self.mesh.ne, "P0": self.mesh.nt,
                    "P1": self.mesh.nv}[self.kind]
        if self.values.shape != (expected,):
            raise ValueError("expected %d %s coefficients, got %r"
                             % (expected, self.kind, self.values.shape))


def dof_to_text(dof: DofVector) -> str:
    lines = ["amfemdof 1 %s %d" % (dof.kind, len(dof.values))]
    lines.extend(repr(float(v)) for v in dof.values)
    return "\n".join(lines) + "\n"


def dof_from_text(text, mesh):
    rows = [r for r in (line.split("#", 1)[0].strip()
                        for line in text.splitlines()) if r]
    head = rows[0].split() if rows else []
    if len(head) != 4 or head[:2] != ["amfemdof", "1"] or head[2] not in _KINDS:
        raise ValueError("expected header 'amfemdof 1 <space> <ndof>'")
    n = int(head[3])
    if len(rows) != 1 + n:
        raise ValueError("expected %d coefficients, found %d" % (n, len(rows) - 1))
    vals = np.array([float(r) for r in rows[1:]])
    return DofVector(head[2], vals, mesh)


# -- pointwise evaluation ---------------------------------------------------

def _signed_coeffs(space, values):
    m = space.mesh
    return values[m.tri_edge] * m.tri_sign


def rt_affine(space, values):
    """Per live triangle the affine representation sigma(x) = a0 + c*x:
    returns (a0, c) with shapes (nl, 2) and (nl,)."""
    m = space.mesh
    cs = _signed_coeffs(space, values)
    inv2a = 1.0 / (2.0 * m.tri_area)
    c = cs.sum(axis=1) * inv2a
    a0 = -np.einsum("ti,tix->tx", cs, space.opp_coords()) * inv2a[:, None]
    return a0, c


def _bary(mesh, t, point):
    v = mesh.points[mesh.tri_verts[t]]
    T = np.column_stack([v[1] - v[0], v[2] - v[0]])
    lam = np.linalg.solve(T, np.asarray(point, dtype=float) - v[0])
    return np.array([1.0 - lam.sum(), lam[0], lam[1]])


def eval_rt(space, dof, t, point):
    """Flux field value at a point of live triangle t."""
    m = space.mesh
    pos = m.live_pos[t]
    if pos < 0:
        raise ValueError("triangle %d is not live" % t)
    if _bary(m, t, point).min() < -1e-12:
        raise ValueError("point %r lies outside triangle %d" % (point, t))
    a0, c = rt_affine(space, dof.values)
    return a0[pos] + c[pos] * np.asarray(point, dtype=float)


def div_rt(space, dof, t=None):
    """Divergence, constant per triangle; all live triangles when t is None."""
    m = space.mesh
    cs = _signed_coeffs(space, dof.values)
    div = cs.sum(axis=1) / m.tri_area
    if t is None:
        return div
    pos = m.live_pos[t]
    if pos < 0:
        raise ValueError("triangle %d is not live" % t)
    return float(div[pos])


def rot_rt(space, dof, t=None):
    """Rotation of the flux field.  Fields of the form a + c*x have zero
    rotation identically, so this returns exact zeros; kept as an operation
    because the edge estimator assembles it alongside the jump term."""
    if t is None:
        return np.zeros(space.mesh.nt)
    if space.mesh.live_pos[t] < 0:
        raise ValueError("triangle %d is not live" % t)
    return 0.0


# -- interpolation and projection ------------------------------------------

def l2_project(f, space: P0Space) -> DofVector:
    """Cell means of f: the L2 projection onto piecewise constants."""
    src = as_source(f)
    return DofVector("P0", src.cell_means(space.mesh), space.mesh)


def edge_normals(mesh):
    """(ne, 2) unit normals: the a -> b tangent rotated by -90 degrees."""
    vec = mesh.points[mesh.edge_verts[:, 1]] - mesh.points[mesh.edge_verts[:, 0]]
    t = vec / mesh.edge_len[:, None]
    return np.column_stack([t[:, 1], -t[:, 0]])


def interpolate_rt(tau, space: RTSpace) -> DofVector:
    """Edge-flux interpolant: dof on E is the 2-point Gauss approximation of
    the flux integral of tau across E (exact for components of degree <= 3)."""
    m = space.mesh
    a = m.points[m.edge_verts[:, 0]]
    b = m.points[m.edge_verts[:, 1]]
    n = edge_normals(m)
    g, w = quadrature.edge_rule()
    vals = np.zeros(m.ne)
    for gi, wi in zip(g, w):
        p = a + gi * (b - a)
        tx, ty = tau(p[:, 0], p[:, 1])
        vals += wi * (tx * n[:, 0] + ty * n[:, 1])
    return DofVector("RT", vals * m.edge_len, m)


def prolongate(dof: DofVector, fine: Mesh) -> DofVector:
    """Represent a coarse P0 or RT field exactly on a nested finer mesh."""
    coarse = dof.mesh
    anc = ancestor_map(fine, coarse)
    anc_pos = coarse.live_pos[anc]
    if dof.kind == "P0":
        return DofVector("P0", dof.values[anc_pos], fine)
    if dof.kind != "RT":
        raise ValueError("prolongation supports RT and P0 fields, not %s"
                         % dof.kind)
    a0, c = rt_affine(RTSpace(coarse), dof.values)
    # flux of the coarse field through each fine edge; the integrand is
    # linear along the edge, so the midpoint value is exact.  Taking the
    # containing coarse triangle of either incident fine triangle gives the
    # same flux because normal components match across coarse edges.
    left = np.where(fine.edge_tri[:, 0] >= 0, fine.edge_tri[:, 0],
                    fine.edge_tri[:, 1])
    owner = anc_pos[fine.live_pos[left]]
    mid = 0.5 * (fine.points[fine.edge_verts[:, 0]]
                 + fine.points[fine.edge_verts[:, 1]])
    sig = a0[owner] + c[owner, None] * mid
    n = edge_normals(fine)
    vals = (sig * n).sum(axis=1) * fine.edge_len
    return DofVector("RT", vals, fine)


def curl_p1(psi: DofVector) -> DofVector:
    """Rotated gradient (d/dy, -d/dx) of a P1 field as an RT flux vector.

    The flux of curl(psi) through edge (a, b) equals the tangential
    derivative integral, i.e. psi(b) - psi(a) exactly.
    """
    if psi.kind != "P1":
        raise ValueError("curl takes a P1 field")
    m = psi.mesh
    vals = psi.values[m.edge_verts[:, 1]] - psi.values[m.edge_verts[:, 0]]
    return DofVector("RT", vals, m)


def grad_h(v: DofVector, space: RTSpace | None = None) -> DofVector:
    """Discrete gradient: the RT field g with (g, tau) = -(v, div tau) for
    all tau, i.e. the L2 Riesz lift of the divergence functional."""
    if v.kind != "P0":
        raise ValueError("grad_h takes a P0 field")
    if space is None:
        space = RTSpace(v.mesh)
    M = rt_mass_matrix(space)
    B = div_matrix(space)
    if space._mass_lu is None:
        space._mass_lu = spla.splu(M.tocsc())
    g = space._mass_lu.solve(-(B.T @ v.values))
    return DofVector("RT", g, space.mesh)


# -- matrices ---------------------------------------------------------------

def rt_mass_matrix(space: RTSpace):
    """Sparse flux mass matrix M_ij = integral of phi_i . phi_j."""
    if space._mass is not None:
        return space._mass
    m = space.mesh
    P = space.opp_coords()
    bary, w = quadrature.tri_rule(2)
    X = quadrature.tri_points(P, bary)          # (nl, nq, 2)
    D = X[:, :, None, :] - P[:, None, :, :]     # (nl, nq, 3, 2)
    base = np.einsum("tqia,tqja,q->tij", D, D, w)
    s = space.mesh.tri_sign.astype(float)
    scale = 1.0 / (4.0 * m.tri_area)
    loc = base * s[:, :, None] * s[:, None, :] * scale[:, None, None]
    rows = np.repeat(m.tri_edge, 3, axis=1).ravel()
    cols = np.tile(m.tri_edge, (1, 3)).ravel()
    M = sp.coo_matrix((loc.ravel(), (rows, cols)),
                      shape=(m.ne, m.ne)).tocsr()
    space._mass = M
    return M


def div_matrix(space: RTSpace):
    """Sparse matrix B with (B sigma)_T = integral of div sigma over T;
    entries are +-1, three per row."""
    m = space.mesh
    rows = np.repeat(np.arange(m.nt), 3)
    cols = m.tri_edge.ravel()
    vals = m.tri_sign.ravel().astype(float)
    return sp.coo_matrix((vals, (rows, cols)), shape=(m.nt, m.ne)).tocsr()
