"""A posteriori error indicators: edge jumps plus data oscillation.

Each edge E carries

    eta_E^2 = sum_{T in patch(E)} h_T^2 |rot sigma|_{0,T}^2
              + h_E * integral_E J_E^2 ds

where J_E is the tangential jump of the flux across E, left triangle minus
right (on the boundary just the trace).  Flux fields here are affine per
triangle, so the rotation term vanishes identically; it is assembled anyway
so the indicator stays structurally complete for richer flux spaces.  The
data oscillation per triangle is h_T^2 * |f - mean(f)|_{0,T}^2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quadrature
from .assembly import MixedSolution
from .fespace import DofVector, RTSpace, rot_rt, rt_affine
from .mesh import Mesh
from .sources import as_source

__all__ = ["EstimatorReport", "jump", "eta_edge", "eta_total", "oscillation",
           "estimate", "edge_jumps", "indicator_edges", "report_to_csv"]


@dataclass
class EstimatorReport:
    mesh: Mesh
    eta2_edges: np.ndarray       # (ne,) squared indicator per edge id
    osc2_tris: np.ndarray        # (nl,) squared oscillation, live order

    @property
    def eta2_total(self):
        return float(self.eta2_edges.sum())

    @property
    def osc2_total(self):
        return float(self.osc2_tris.sum())


def _jumps_from_affine(mesh, a0, c):
    pa = mesh.points[mesh.edge_verts[:, 0]]
    pb = mesh.points[mesh.edge_verts[:, 1]]
    t = (pb - pa) / mesh.edge_len[:, None]

    def trace(side, pts):
        tri = mesh.edge_tri[:, side]
        pos = mesh.live_pos[np.where(tri >= 0, tri, mesh.live[0])]
        sig = a0[pos] + c[pos, None] * pts
        vals = (sig * t).sum(axis=1)
        return np.where(tri >= 0, vals, 0.0)

    ja = trace(0, pa) - trace(1, pa)
    jb = trace(0, pb) - trace(1, pb)
    return ja, jb


def edge_jumps(sigma: DofVector):
    """Tangential jump of a flux field at both endpoints of every edge."""
    a0, c = rt_affine(RTSpace(sigma.mesh), sigma.values)
    return _jumps_from_affine(sigma.mesh, a0, c)


def _eta2_from_affine(mesh, a0, c, rot):
    ja, jb = _jumps_from_affine(mesh, a0, c)
    g, w = quadrature.edge_rule()
    jump2 = np.zeros(mesh.ne)
    for gi, wi in zip(g, w):
        jump2 += wi * (ja + gi * (jb - ja)) ** 2
    eta2 = mesh.edge_len * (mesh.edge_len * jump2)
    if np.any(rot):
        rot_t = mesh.tri_h ** 2 * rot ** 2 * mesh.tri_area
        for side in (0, 1):
            tri = mesh.edge_tri[:, side]
            has = tri >= 0
            eta2[has] += rot_t[mesh.live_pos[tri[has]]]
    return eta2


def indicator_edges(sigma: DofVector):
    """Squared edge indicator of a flux field, indexed by edge id."""
    space = RTSpace(sigma.mesh)
    a0, c = rt_affine(space, sigma.values)
    return _eta2_from_affine(sigma.mesh, a0, c, rot_rt(space, sigma))


def _eta2_of(sol: MixedSolution):
    a0, c = sol.affine()
    rot = rot_rt(RTSpace(sol.mesh), sol.sigma)
    return _eta2_from_affine(sol.mesh, a0, c, rot)


def _eid(edge):
    return int(getattr(edge, "id", edge))


def jump(sol: MixedSolution, edge):
    """Endpoint values (J_a, J_b) of the linear tangential jump on an edge."""
    a0, c = sol.affine()
    ja, jb = _jumps_from_affine(sol.mesh, a0, c)
    e = _eid(edge)
    return float(ja[e]), float(jb[e])


def eta_edge(sol: MixedSolution, edge):
    """Indicator value of a single edge (square root of the edge part)."""
    return float(np.sqrt(_eta2_of(sol)[_eid(edge)]))


def eta_total(sol: MixedSolution, edge_ids=None):
    """Indicator over a set of edge ids (all by default): sqrt of the sum
    of squared edge contributions."""
    eta2 = _eta2_of(sol)
    if edge_ids is None:
        return float(np.sqrt(eta2.sum()))
    idx = np.asarray([_eid(e) for e in edge_ids], dtype=np.int64)
    return float(np.sqrt(eta2[idx].sum())) if idx.size else 0.0


def oscillation(f, mesh: Mesh):
    """Squared data oscillation per live triangle, h_T^2 |f - f_T|^2."""
    return mesh.tri_h ** 2 * as_source(f).cell_osc2(mesh)


def estimate(sol: MixedSolution, f) -> EstimatorReport:
    return EstimatorReport(sol.mesh, _eta2_of(sol), oscillation(f, sol.mesh))


def report_to_csv(report: EstimatorReport):
    """Per-edge and per-triangle CSV bodies as two strings."""
    eta_lines = ["edge_id,eta2"]
    eta_lines.extend("%d,%s" % (i, repr(float(v)))
                     for i, v in enumerate(report.eta2_edges))
    osc_lines = ["tri_id,osc2"]
    osc_lines.extend("%d,%s" % (t, repr(float(v)))
                     for t, v in zip(report.mesh.live, report.osc2_tris))
    return "\n".join(eta_lines) + "\n", "\n".join(osc_lines) + "\n"
