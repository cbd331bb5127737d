"""Marking strategies and the adaptive refinement drivers.

The main loop alternates solve / estimate / mark / refine.  Edges are
marked by Doerfler's criterion on the squared edge indicators; when the
data oscillation decays slower than a geometric target mu^k the marked set
is enlarged until the oscillation carried by the marked patches covers a
theta_tilde fraction.  Refinement bisects every triangle of each marked
edge's patch until the edge itself has split.

``approx`` is the data-approximation counterpart: it ignores the solution
entirely and drives only the oscillation below a tolerance, greedily
marking the edges whose patches carry the most oscillation.  ``two_stage``
chains both: approximate the data on a mesh of its own, project f onto
piecewise constants there, then run the adaptive loop on the projected
data, whose oscillation is exactly zero on every descendant mesh.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import ProblemSpec, error_sigma, solve_poisson
from .estimator import EstimatorReport, estimate, oscillation
from .fespace import prolongate, rt_mass_matrix, RTSpace
from .mesh import Mesh, ancestor_map, refine_edges
from .sources import P0Source, as_source

__all__ = ["AdaptParams", "MarkSet", "HistoryRecord", "ConvergenceHistory",
           "dorfler_mark", "osc_mark", "amfem", "approx", "two_stage"]

HISTORY_COLUMNS = ("k", "stage", "nT", "nE", "eta2", "osc2", "err",
                   "n_marked", "n_bisected", "wall_ms")


@dataclass
class AdaptParams:
    epsilon: float = 1e-3
    theta: float = 0.3
    theta_tilde: float = 0.5
    mu: float = 0.7
    max_iters: int = 60
    max_triangles: int = 300000

    def validate(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1], got %r" % self.theta)
        if not 0.0 <= self.theta_tilde <= 1.0:
            raise ValueError("theta_tilde must lie in [0, 1]")
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("mu must lie in (0, 1]")
        if self.epsilon <= 0 or self.max_iters < 0 or self.max_triangles < 1:
            raise ValueError("bad stopping parameters")
        return self


@dataclass
class MarkSet:
    """Marked edge ids, ordered by decreasing indicator; ``achieved`` is the
    indicator fraction the set carries."""
    edges: np.ndarray
    achieved: float = 0.0

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)


@dataclass
class HistoryRecord:
    k: int
    stage: str
    nT: int
    nE: int
    eta2: float
    osc2: float
    err: float
    n_marked: int
    n_bisected: int
    wall_ms: float


@dataclass
class ConvergenceHistory:
    records: list = field(default_factory=list)
    status: str = ""
    monitors: dict = field(default_factory=dict)

    def add(self, **kw):
        self.records.append(HistoryRecord(**kw))

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def gamma_hat(self, stage=None):
        """Observed contraction factor of eta: geometric mean of the ratios
        eta_{k+1} / eta_k over consecutive records."""
        recs = [r for r in self.records if stage is None or r.stage == stage]
        ratios = [recs[i + 1].eta2 / recs[i].eta2 for i in range(len(recs) - 1)
                  if recs[i].eta2 > 0 and recs[i + 1].eta2 > 0]
        if not ratios:
            return float("nan")
        return float(np.exp(0.5 * np.mean(np.log(ratios))))

    def to_csv(self):
        lines = [",".join(HISTORY_COLUMNS)]
        for r in self.records:
            lines.append(",".join([
                "%d" % r.k, r.stage, "%d" % r.nT, "%d" % r.nE,
                repr(float(r.eta2)), repr(float(r.osc2)), repr(float(r.err)),
                "%d" % r.n_marked, "%d" % r.n_bisected,
                "%.3f" % r.wall_ms]))
        return "\n".join(lines) + "\n"

    def extend(self, other):
        self.records.extend(other.records)
        if other.status:
            self.status = other.status
        for key, vals in other.monitors.items():
            self.monitors.setdefault(key, []).extend(vals)
        return self


def dorfler_mark(report: EstimatorReport, theta: float) -> MarkSet:
    """Smallest descending-prefix edge set carrying at least a theta
    fraction of the total squared indicator (ties by ascending edge id)."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1], got %r" % theta)
    eta2 = report.eta2_edges
    total = eta2.sum()
    if total <= 0.0:
        return MarkSet(np.empty(0, dtype=np.int64), 0.0)
    order = np.argsort(-eta2, kind="stable")
    csum = np.cumsum(eta2[order])
    n = int(np.searchsorted(csum, theta * total)) + 1
    n = min(n, len(order))
    return MarkSet(order[:n].astype(np.int64), float(csum[n - 1] / total))


def _patch_tris(mesh, eid):
    return [int(t) for t in mesh.edge_tri[eid] if t >= 0]


def osc_mark(report: EstimatorReport, theta_tilde: float,
             existing: MarkSet | None = None,
             mesh: Mesh | None = None) -> MarkSet:
    """Enlarge a marked set until the triangles of its edge patches carry a
    theta_tilde fraction of the squared oscillation.  Greedy: repeatedly add
    the edge contributing the most uncovered oscillation (ties by id)."""
    if not 0.0 <= theta_tilde <= 1.0:
        raise ValueError("theta_tilde must lie in [0, 1]")
    if existing is None:
        existing = MarkSet(np.empty(0, dtype=np.int64), 0.0)
    if mesh is None:
        mesh = report.mesh
    osc2 = report.osc2_tris
    total = osc2.sum()
    chosen = [int(e) for e in existing.edges]
    if theta_tilde == 0.0 or total <= 0.0:
        return MarkSet(np.array(chosen, dtype=np.int64), existing.achieved)
    covered_tris = set()
    for e in chosen:
        covered_tris.update(_patch_tris(mesh, e))
    covered = sum(osc2[mesh.live_pos[t]] for t in covered_tris)
    target = theta_tilde ** 2 * total
    if covered >= target:
        return MarkSet(np.array(chosen, dtype=np.int64), existing.achieved)

    def gain(eid):
        return sum(osc2[mesh.live_pos[t]] for t in _patch_tris(mesh, eid)
                   if t not in covered_tris)

    in_set = set(chosen)
    heap = []
    for eid in range(mesh.ne):
        if eid not in in_set:
            g = gain(eid)
            if g > 0:
                heap.append((-g, eid))
    heapq.heapify(heap)
    while covered < target and heap:
        negg, eid = heapq.heappop(heap)
        g = gain(eid)
        if g <= 0:
            continue
        if -negg > g and heap and -heap[0][0] > g:
            heapq.heappush(heap, (-g, eid))   # stale entry, re-rank
            continue
        chosen.append(eid)
        in_set.add(eid)
        for t in _patch_tris(mesh, eid):
            covered_tris.add(t)
        covered += g
    if covered < target:
        raise AssertionError("could not cover the oscillation target")
    return MarkSet(np.array(chosen, dtype=np.int64), existing.achieved)


def _combinatorial_check(coarse, fine):
    """Edges of the coarse mesh that are gone in the fine one; their count
    is bounded by 3x the triangle increase (a property of bisection that
    the discrete upper bound relies on)."""
    fine_pairs = set(map(tuple, fine.edge_verts.tolist()))
    gone = [i for i, pair in enumerate(map(tuple, coarse.edge_verts.tolist()))
            if pair not in fine_pairs]
    bound = 3 * (fine.nt - coarse.nt)
    if len(gone) > bound:
        raise AssertionError("%d edges vanished but only %d triangles were "
                             "created" % (len(gone), fine.nt - coarse.nt))
    return np.array(gone, dtype=np.int64)


def _coarse_osc2(src, fine, coarse):
    """Squared oscillation of the fine cell means over the coarse mesh."""
    fmean = src.cell_means(fine)
    anc = coarse.live_pos[ancestor_map(fine, coarse)]
    area = fine.tri_area
    cmean = (np.bincount(anc, weights=fmean * area, minlength=coarse.nt)
             / coarse.tri_area)
    dev = np.bincount(anc, weights=(fmean - cmean[anc]) ** 2 * area,
                      minlength=coarse.nt)
    return float((coarse.tri_h ** 2 * dev).sum())


def amfem(mesh0: Mesh, problem: ProblemSpec, params: AdaptParams,
          monitors: bool = False, stage: str = "amfem"):
    """Adaptive loop: returns (mesh, solution, history).

    Stops when the total estimator drops below epsilon, or when the
    iteration/triangle caps are hit (status 'tol' vs 'capped').
    """
    params.validate()
    if problem.g is not None:
        raise ValueError("the adaptive loop requires homogeneous boundary "
                         "values; solve with g directly instead")
    src = as_source(problem.f)
    hist = ConvergenceHistory()
    hist.monitors = {"upper_ratio": [], "n_gone": [], "n_patch": []}
    mesh = mesh0
    osc0 = None
    prev = None     # (mesh, solution, report, marked) of the previous step
    k = 0
    while True:
        t0 = time.perf_counter()
        sol = solve_poisson(mesh, problem)
        report = estimate(sol, src)
        err = (error_sigma(sol, problem.sigma_exact)
               if problem.sigma_exact is not None else float("nan"))
        eta2 = report.eta2_total
        osc2 = report.osc2_total
        if osc0 is None:
            osc0 = np.sqrt(osc2)

        if monitors and prev is not None:
            pmesh, psol, preport, pmarked = prev
            gone = _combinatorial_check(pmesh, mesh)
            hist.monitors["n_gone"].append(len(gone))
            d = (sol.sigma.values
                 - prolongate(psol.sigma, mesh).values)
            M = rt_mass_matrix(RTSpace(mesh))
            num = float(d @ (M @ d))
            den = float(preport.eta2_edges[gone].sum()) + _coarse_osc2(
                src, mesh, pmesh)
            hist.monitors["upper_ratio"].append(
                num / den if den > 0 else float("nan"))
        elif prev is not None:
            _combinatorial_check(prev[0], mesh)

        row = dict(k=k, stage=stage, nT=mesh.nt, nE=mesh.ne, eta2=eta2,
                   osc2=osc2, err=err, n_marked=0, n_bisected=0, wall_ms=0.0)
        if np.sqrt(eta2) < params.epsilon:
            hist.status = "tol"
            row["wall_ms"] = (time.perf_counter() - t0) * 1e3
            hist.add(**row)
            return mesh, sol, hist
        if k >= params.max_iters or mesh.nt >= params.max_triangles:
            hist.status = "capped"
            row["wall_ms"] = (time.perf_counter() - t0) * 1e3
            hist.add(**row)
            return mesh, sol, hist

        marked = dorfler_mark(report, params.theta)
        if np.sqrt(osc2) > osc0 * params.mu ** k:
            marked = osc_mark(report, params.theta_tilde, marked, mesh)
        hist.monitors["n_patch"].append(
            len({t for e in marked.edges for t in _patch_tris(mesh, int(e))}))
        new_mesh, bisected = refine_edges(mesh, marked)
        row["n_marked"] = len(marked)
        row["n_bisected"] = len(bisected)
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        hist.add(**row)
        prev = (mesh, sol, report, marked)
        mesh = new_mesh
        k += 1


def approx(f, mesh0: Mesh, epsilon: float, theta_osc: float = 0.5,
           max_iters: int = 100, max_triangles: int = 300000):
    """Greedy data approximation: refine until the total oscillation of f
    drops below epsilon.  Returns (mesh, history)."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if not 0.0 < theta_osc <= 1.0:
        raise ValueError("theta_osc must lie in (0, 1]")
    src = as_source(f)
    hist = ConvergenceHistory()
    mesh = mesh0
    k = 0
    while True:
        t0 = time.perf_counter()
        osc2_tris = oscillation(src, mesh)
        osc2 = float(osc2_tris.sum())
        row = dict(k=k, stage="approx", nT=mesh.nt, nE=mesh.ne,
                   eta2=float("nan"), osc2=osc2, err=float("nan"),
                   n_marked=0, n_bisected=0, wall_ms=0.0)
        if np.sqrt(osc2) <= epsilon:
            hist.status = "tol"
            row["wall_ms"] = (time.perf_counter() - t0) * 1e3
            hist.add(**row)
            return mesh, hist
        if k >= max_iters or mesh.nt >= max_triangles:
            hist.status = "capped"
            row["wall_ms"] = (time.perf_counter() - t0) * 1e3
            hist.add(**row)
            return mesh, hist
        report = EstimatorReport(mesh, np.zeros(mesh.ne), osc2_tris)
        marked = osc_mark(report, theta_osc, mesh=mesh)
        mesh, bisected = refine_edges(mesh, marked)
        row["n_marked"] = len(marked)
        row["n_bisected"] = len(bisected)
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        hist.add(**row)
        k += 1


def two_stage(f, mesh0: Mesh, epsilon: float, params: AdaptParams,
              monitors: bool = False):
    """Data approximation to epsilon/2, then the adaptive loop on the
    projected piecewise-constant data to epsilon/2.  Returns
    (mesh, solution, history) with stage-tagged records."""
    src = as_source(f)
    mesh_h, hist = approx(src, mesh0, 0.5 * epsilon,
                          max_triangles=params.max_triangles)
    fh = P0Source(mesh_h, src.cell_means(mesh_h))
    stage2 = AdaptParams(epsilon=0.5 * epsilon, theta=params.theta,
                         theta_tilde=0.0, mu=1.0,
                         max_iters=params.max_iters,
                         max_triangles=params.max_triangles)
    problem = ProblemSpec(f=fh, name="two_stage")
    mesh, sol, hist2 = amfem(mesh_h, problem, stage2, monitors=monitors)
    hist.extend(hist2)
    return mesh, sol, hist
