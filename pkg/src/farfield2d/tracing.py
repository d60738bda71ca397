"""Geometry of the real zero curves of singular components.

Each component with the real property meets the real plane in a
one-dimensional curve.  This module discretises that curve (sign-scan
over a regular grid followed by Newton polishing), provides the local
orthonormal frame built from the exact gradient, and computes the
curvature coefficient that drives the quadratic local model used by the
far-field formulas.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradientError
from .expressions import SingularComponent

__all__ = [
    "TRACE_TOL",
    "RealTrace",
    "LocalFrame",
    "trace_real_curves",
    "frame_at",
    "alpha_at",
]

TRACE_TOL = 1e-10
DEGENERATE_GRAD_SQ = 1e-20


@dataclass
class RealTrace:
    """Polyline approximation of one component's real zero curve.

    ``polylines[k]`` is an ordered (n, 2) float array; ``gradients[k]``
    holds the exact gradient (a, b) at each vertex.  Vertices satisfy
    |g| <= TRACE_TOL and carry a non-degenerate gradient.
    """

    component_id: str
    polylines: list
    gradients: list

    @property
    def vertex_count(self) -> int:
        return sum(len(p) for p in self.polylines)

    def all_vertices(self) -> np.ndarray:
        if not self.polylines:
            return np.zeros((0, 2))
        return np.vstack(self.polylines)

    def all_gradients(self) -> np.ndarray:
        if not self.gradients:
            return np.zeros((0, 2))
        return np.vstack(self.gradients)

    def to_csv(self, path) -> None:
        """Write vertices as x,y,a,b rows; polylines separated by a blank
        record so plotting tools can break the line."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "a", "b"])
            for pts, grads in zip(self.polylines, self.gradients):
                for (x, y), (a, b) in zip(pts, grads):
                    w.writerow([repr(float(x)), repr(float(y)),
                                repr(float(a)), repr(float(b))])
                w.writerow([])


@dataclass(frozen=True)
class LocalFrame:
    """Orthonormal frame at a point of a real zero curve.

    ``n`` is the unit normal along the gradient, ``t`` the unit tangent
    obtained by rotating ``n`` counterclockwise by 90 degrees (so ``n`` is
    90 degrees clockwise from ``t``).
    """

    point: tuple[float, float]
    a: float
    b: float
    n: np.ndarray
    t: np.ndarray
    norm: float


def frame_at(component: SingularComponent, point) -> LocalFrame:
    """Exact-gradient frame at a point on the component's zero curve.

    Requires |g(point; 0)| <= TRACE_TOL; raises
    :class:`DegenerateGradientError` when the gradient norm collapses.
    """
    x, y = float(point[0]), float(point[1])
    val = complex(component.value(x, y, 0.0))
    if abs(val) > TRACE_TOL:
        raise ValueError(
            f"point ({x}, {y}) is not on the zero curve of {component.id!r}: "
            f"|g| = {abs(val):.3e}"
        )
    ga, gb = component.grad(x, y, 0.0)
    a, b = complex(ga).real, complex(gb).real
    norm2 = a * a + b * b
    if norm2 <= DEGENERATE_GRAD_SQ:
        raise DegenerateGradientError(
            f"gradient of {component.id!r} degenerates at ({x}, {y})"
        )
    norm = float(np.sqrt(norm2))
    n = np.array([a, b]) / norm
    t = np.array([-b, a]) / norm
    return LocalFrame(point=(x, y), a=a, b=b, n=n, t=t, norm=norm)


def alpha_at(component: SingularComponent, point) -> float:
    """Curvature coefficient of the zero curve at a point.

    With a, b the gradient and (h11, h12, h22) the Hessian of g, returns

        alpha = -(b^2*h11/2 + a^2*h22/2 - a*b*h12) / (a^2 + b^2)^2,

    which equals (signed curvature) / (2 * |grad g|) of the implicit
    curve.  Zero for straight lines.
    """
    fr = frame_at(component, point)
    h11, h12, h22 = component.hessian(point[0], point[1], 0.0)
    at = complex(h11).real / 2.0
    bt = complex(h22).real / 2.0
    gt = complex(h12).real
    a, b = fr.a, fr.b
    return float(-(b * b * at + a * a * bt - a * b * gt) / (a * a + b * b) ** 2)


# ---------------------------------------------------------------------------
# marching-squares scan
# ---------------------------------------------------------------------------

# per sign-case list of edge pairs to connect; edges are 0=bottom, 1=right,
# 2=top, 3=left; corner bit order: 0=(i,j), 1=(i+1,j), 2=(i+1,j+1), 3=(i,j+1)
_CASES = {
    0: [], 15: [],
    1: [(3, 0)], 14: [(3, 0)],
    2: [(0, 1)], 13: [(0, 1)],
    4: [(1, 2)], 11: [(1, 2)],
    8: [(2, 3)], 7: [(2, 3)],
    3: [(3, 1)], 12: [(3, 1)],
    6: [(0, 2)], 9: [(0, 2)],
    # ambiguous saddles, resolved with the cell-centre sample
    5: None, 10: None,
}


def _newton_polish(component, pts, tol=TRACE_TOL, max_iter=60):
    """Project points onto g = 0 along the gradient (batched)."""
    px = pts[:, 0].astype(float).copy()
    py = pts[:, 1].astype(float).copy()
    for _ in range(max_iter):
        val = np.asarray(component.value(px, py, 0.0), dtype=complex).real
        if np.all(np.abs(val) <= tol):
            break
        a, b = component.grad(px, py, 0.0)
        a = np.asarray(a, dtype=complex).real
        b = np.asarray(b, dtype=complex).real
        norm2 = a * a + b * b
        bad = norm2 <= DEGENERATE_GRAD_SQ
        norm2 = np.where(bad, 1.0, norm2)
        step = val / norm2
        # cap the step to stay inside the basin
        step = np.clip(step, -1e3, 1e3)
        px = px - step * a
        py = py - step * b
    return np.column_stack([px, py])


def trace_real_curves(
    component: SingularComponent,
    window: tuple[float, float, float, float],
    cell_size: float,
) -> RealTrace:
    """Trace the component's real zero curve inside a window.

    Sign changes of g over an axis-aligned grid of ``cell_size`` cells
    seed segments that are stitched into polylines and Newton-polished to
    |g| <= TRACE_TOL.  An empty trace (no zeros in the window) returns a
    RealTrace with no polylines.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    x0, x1, y0, y1 = window
    nx = max(int(np.ceil((x1 - x0) / cell_size)) + 1, 2)
    ny = max(int(np.ceil((y1 - y0) / cell_size)) + 1, 2)
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    G = np.asarray(component.value(X, Y, 0.0), dtype=complex).real

    # exact zeros confuse the sign test; nudge them onto the positive side
    # (the polish step recovers full accuracy)
    G = np.where(G == 0.0, 1e-300, G)
    pos = G > 0.0

    def edge_point(xa, ya, va, xb, yb, vb):
        s = va / (va - vb)
        return (xa + s * (xb - xa), ya + s * (yb - ya))

    edge_pts: dict = {}
    segments: list = []

    corner = (
        pos[:-1, :-1].astype(np.uint8)
        | (pos[1:, :-1].astype(np.uint8) << 1)
        | (pos[1:, 1:].astype(np.uint8) << 2)
        | (pos[:-1, 1:].astype(np.uint8) << 3)
    )
    ii, jj = np.nonzero((corner != 0) & (corner != 15))
    for i, j in zip(ii, jj):
        case = int(corner[i, j])
        pairs = _CASES[case]
        if pairs is None:
            centre = 0.25 * (G[i, j] + G[i + 1, j] + G[i + 1, j + 1] + G[i, j + 1])
            if case == 5:
                pairs = [(0, 1), (2, 3)] if centre > 0 else [(0, 3), (1, 2)]
            else:  # case 10
                pairs = [(0, 3), (1, 2)] if centre > 0 else [(0, 1), (2, 3)]
        # local edge id -> (global edge key, crossing point)
        local = {}
        for e in {e for pair in pairs for e in pair}:
            if e == 0:
                key = ("h", i, j)
                pt = edge_point(xs[i], ys[j], G[i, j], xs[i + 1], ys[j], G[i + 1, j])
            elif e == 1:
                key = ("v", i + 1, j)
                pt = edge_point(xs[i + 1], ys[j], G[i + 1, j], xs[i + 1], ys[j + 1], G[i + 1, j + 1])
            elif e == 2:
                key = ("h", i, j + 1)
                pt = edge_point(xs[i], ys[j + 1], G[i, j + 1], xs[i + 1], ys[j + 1], G[i + 1, j + 1])
            else:
                key = ("v", i, j)
                pt = edge_point(xs[i], ys[j], G[i, j], xs[i], ys[j + 1], G[i, j + 1])
            local[e] = key
            edge_pts.setdefault(key, pt)
        for ea, eb in pairs:
            segments.append((local[ea], local[eb]))

    polylines = _stitch(segments, edge_pts)

    out_pts, out_grads = [], []
    for chain in polylines:
        pts = np.array(chain, dtype=float)
        pts = _newton_polish(component, pts)
        val = np.abs(np.asarray(component.value(pts[:, 0], pts[:, 1], 0.0), dtype=complex))
        keep = val <= TRACE_TOL
        if keep.sum() < 2:
            continue
        pts = pts[keep]
        # drop vertices that collapse onto their predecessor after polishing
        d = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        keep = np.concatenate([[True], d > 1e-12])
        pts = pts[keep]
        if len(pts) < 2:
            continue
        a, b = component.grad(pts[:, 0], pts[:, 1], 0.0)
        a = np.asarray(a, dtype=complex).real
        b = np.asarray(b, dtype=complex).real
        norm2 = a * a + b * b
        ok = norm2 > DEGENERATE_GRAD_SQ
        pts, a, b = pts[ok], a[ok], b[ok]
        if len(pts) < 2:
            continue
        # orient so travel direction matches the tangent (-b, a); the
        # normal (a, b) then sits consistently to the right of travel
        t0 = np.array([-b[0], a[0]])
        if np.dot(pts[1] - pts[0], t0) < 0:
            pts, a, b = pts[::-1].copy(), a[::-1].copy(), b[::-1].copy()
        out_pts.append(pts)
        out_grads.append(np.column_stack([a, b]))

    # deterministic ordering: by first vertex, lexicographic
    order = sorted(range(len(out_pts)), key=lambda k: (out_pts[k][0, 0], out_pts[k][0, 1]))
    return RealTrace(
        component_id=component.id,
        polylines=[out_pts[k] for k in order],
        gradients=[out_grads[k] for k in order],
    )


def _stitch(segments, edge_pts):
    """Join edge-to-edge segments into chains of crossing points."""
    adjacency: dict = {}
    for sid, (ea, eb) in enumerate(segments):
        adjacency.setdefault(ea, []).append((sid, eb))
        adjacency.setdefault(eb, []).append((sid, ea))

    used = [False] * len(segments)
    chains = []

    def walk(start_edge, first_sid, first_other):
        used[first_sid] = True
        chain = [start_edge, first_other]
        while True:
            here = chain[-1]
            nxt = None
            for sid, other in adjacency.get(here, ()):
                if not used[sid]:
                    nxt = (sid, other)
                    break
            if nxt is None:
                return chain
            used[nxt[0]] = True
            chain.append(nxt[1])

    for sid, (ea, eb) in enumerate(segments):
        if used[sid]:
            continue
        forward = walk(ea, sid, eb)
        # extend backwards from the starting edge
        back = []
        while True:
            here = forward[0] if not back else back[-1]
            nxt = None
            for s2, other in adjacency.get(here, ()):
                if not used[s2]:
                    nxt = (s2, other)
                    break
            if nxt is None:
                break
            used[nxt[0]] = True
            back.append(nxt[1])
        chain = list(reversed(back)) + forward
        chains.append([edge_pts[e] for e in chain])
    return chains
