"""Locating special points and deciding whether they contribute.

For a given observation direction only finitely many real points can feed
the far field: points where the direction is perpendicular to a singular
curve (stationary-phase points on the curve) and transverse intersections
of two curves whose bypass configuration blocks every decaying local
deformation.  Everything else is inactive, and an active intersection is
still discarded when the integrand splits additively there.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np
from scipy.optimize import minimize_scalar

from .bridges import BridgeConfig
from .errors import UnsupportedConfigurationError
from .expressions import SingularComponent, WaveFunctionModel
from .tracing import TRACE_TOL, RealTrace, alpha_at, frame_at, trace_real_curves

__all__ = [
    "SpecialPoint",
    "find_sos_points",
    "find_crossings",
    "classify_activity",
    "additivity_structural",
    "additivity_monodromy",
]

TRANSVERSALITY_TOL = 1e-8
SIGN_DEAD_ZONE = 1e-12
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class SpecialPoint:
    """A located real point with its classification.

    ``kind`` is "sos", "crossing" or "tangential"; ``components`` holds
    the involved component ids, crossings ordered so the transversality
    determinant a1*b2 - a2*b1 is positive.  ``activity`` is filled by
    :func:`classify_activity` ("active" | "inactive" | "boundary");
    ``contributing`` additionally accounts for additive splitting.
    """

    location: tuple[float, float]
    kind: str
    components: tuple[str, ...]
    alpha: float | None = None
    delta: float | None = None
    signs: tuple[int, ...] = ()
    activity: str | None = None
    contributing: bool | None = None
    reason: str = ""

    def key(self):
        return (round(self.location[0], 9), round(self.location[1], 9))


# ---------------------------------------------------------------------------
# stationary points on a single curve
# ---------------------------------------------------------------------------

def find_sos_points(
    component: SingularComponent,
    x_dir,
    trace: RealTrace,
) -> list[np.ndarray]:
    """Points of the traced curve where ``x_dir`` is perpendicular to it.

    Scans each polyline for sign changes of x_dir . t (t the unit
    tangent) and polishes candidates with a Newton iteration on the pair
    (g = 0, x2~*a - x1~*b = 0).  Both residuals of every returned point
    are below 1e-10.
    """
    xt = np.asarray(x_dir, dtype=float)
    if abs(np.linalg.norm(xt) - 1.0) > 1e-9:
        raise ValueError("x_dir must be a unit vector")

    found: list[np.ndarray] = []
    for pts, grads in zip(trace.polylines, trace.gradients):
        a, b = grads[:, 0], grads[:, 1]
        norm = np.sqrt(a * a + b * b)
        phi = (-b * xt[0] + a * xt[1]) / norm
        hits = np.flatnonzero(np.abs(phi) <= 1e-12)
        changes = np.flatnonzero(np.sign(phi[:-1]) * np.sign(phi[1:]) < 0)
        seeds = [pts[k] for k in hits]
        for k in changes:
            w = abs(phi[k]) / (abs(phi[k]) + abs(phi[k + 1]))
            seeds.append(pts[k] * (1 - w) + pts[k + 1] * w)
        for seed in seeds:
            sol = _polish_sos(component, xt, seed)
            if sol is not None:
                found.append(sol)
    return _dedupe(found)


def _polish_sos(component, xt, seed, max_iter=60):
    p = np.asarray(seed, dtype=float).copy()
    for _ in range(max_iter):
        g = complex(component.value(p[0], p[1], 0.0)).real
        a, b = component.grad(p[0], p[1], 0.0)
        a, b = complex(a).real, complex(b).real
        h11, h12, h22 = component.hessian(p[0], p[1], 0.0)
        h11, h12, h22 = complex(h11).real, complex(h12).real, complex(h22).real
        f2 = xt[1] * a - xt[0] * b
        jac = np.array(
            [[a, b],
             [xt[1] * h11 - xt[0] * h12, xt[1] * h12 - xt[0] * h22]]
        )
        rhs = np.array([g, f2])
        norm = np.hypot(a, b)
        if abs(g) <= RESIDUAL_TOL and abs(f2) / max(norm, 1e-30) <= RESIDUAL_TOL:
            return p
        det = np.linalg.det(jac)
        if abs(det) < 1e-14:
            return None
        p = p - np.linalg.solve(jac, rhs)
    return None


def _dedupe(points, tol=1e-7):
    out: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > tol for q in out):
            out.append(p)
    out.sort(key=lambda q: (q[0], q[1]))
    return out


# ---------------------------------------------------------------------------
# intersections of two curves
# ---------------------------------------------------------------------------

def find_crossings(
    c1: SingularComponent,
    c2: SingularComponent,
    window: tuple[float, float, float, float],
    cell_size: float | None = None,
    traces: tuple[RealTrace, RealTrace] | None = None,
) -> list[SpecialPoint]:
    """Real intersections of two zero curves inside a window.

    Each point is tagged transverse or tangential via the normalised
    determinant |a1*b2 - a2*b1| / (|grad g1| |grad g2|) against 1e-8.
    Transverse crossings come back with components ordered so the
    determinant is positive.  Tangential touches (found by minimising
    |g2| along the first curve, which catches contacts without a sign
    change) keep the caller's ordering.
    """
    if c1.id == c2.id:
        raise ValueError("need two distinct components")
    if cell_size is None:
        cell_size = max(window[1] - window[0], window[3] - window[2]) / 400.0
    if traces is not None:
        t1 = traces[0]
    else:
        t1 = trace_real_curves(c1, window, cell_size)

    candidates: list[np.ndarray] = []
    for pts in t1.polylines:
        v2 = np.asarray(c2.value(pts[:, 0], pts[:, 1], 0.0), dtype=complex).real
        hits = np.flatnonzero(np.abs(v2) <= RESIDUAL_TOL)
        for k in hits:
            candidates.append(pts[k].copy())
        changes = np.flatnonzero(np.sign(v2[:-1]) * np.sign(v2[1:]) < 0)
        for k in changes:
            w = abs(v2[k]) / (abs(v2[k]) + abs(v2[k + 1]))
            seed = pts[k] * (1 - w) + pts[k + 1] * w
            sol = _polish_crossing(c1, c2, seed)
            if sol is not None:
                candidates.append(sol)
        # tangential contacts: local minima of |g2| that touch zero
        candidates.extend(_touch_candidates(c1, c2, pts, v2))

    points = _dedupe(candidates, tol=10 * cell_size)
    out = []
    x0, x1, y0, y1 = window
    for p in points:
        if not (x0 - 1e-9 <= p[0] <= x1 + 1e-9 and y0 - 1e-9 <= p[1] <= y1 + 1e-9):
            continue
        a1, b1 = _real_grad(c1, p)
        a2, b2 = _real_grad(c2, p)
        det = a1 * b2 - a2 * b1
        n1 = np.hypot(a1, b1)
        n2 = np.hypot(a2, b2)
        if abs(det) / (n1 * n2) > TRANSVERSALITY_TOL:
            comps = (c1.id, c2.id) if det > 0 else (c2.id, c1.id)
            out.append(SpecialPoint(
                location=(float(p[0]), float(p[1])),
                kind="crossing",
                components=comps,
                delta=abs(det),
            ))
        else:
            out.append(SpecialPoint(
                location=(float(p[0]), float(p[1])),
                kind="tangential",
                components=(c1.id, c2.id),
                delta=abs(det),
            ))
    out.sort(key=lambda sp: sp.location)
    return out


def _real_grad(component, p):
    a, b = component.grad(p[0], p[1], 0.0)
    return complex(a).real, complex(b).real


def _polish_crossing(c1, c2, seed, max_iter=60):
    p = np.asarray(seed, dtype=float).copy()
    for _ in range(max_iter):
        g1 = complex(c1.value(p[0], p[1], 0.0)).real
        g2 = complex(c2.value(p[0], p[1], 0.0)).real
        if abs(g1) <= RESIDUAL_TOL and abs(g2) <= RESIDUAL_TOL:
            return p
        a1, b1 = _real_grad(c1, p)
        a2, b2 = _real_grad(c2, p)
        jac = np.array([[a1, b1], [a2, b2]])
        if abs(np.linalg.det(jac)) < 1e-13:
            return None
        p = p - np.linalg.solve(jac, np.array([g1, g2]))
    return None


def _touch_candidates(c1, c2, pts, v2):
    """Tangential-contact seeds: minima of |g2| along the first curve."""
    out = []
    absv = np.abs(v2)
    interiors = np.flatnonzero(
        (absv[1:-1] <= absv[:-2]) & (absv[1:-1] <= absv[2:])
    ) + 1
    # arclength parametrisation of the polyline
    seglen = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seglen)])

    def g2_on_curve(sv):
        k = np.searchsorted(s, sv, side="right") - 1
        k = min(max(k, 0), len(pts) - 2)
        w = (sv - s[k]) / max(s[k + 1] - s[k], 1e-300)
        q = pts[k] * (1 - w) + pts[k + 1] * w
        q = _project_onto(c1, q)
        return abs(complex(c2.value(q[0], q[1], 0.0)).real), q

    scale = max(absv.max(), 1.0)
    for k in interiors:
        if absv[k] > 1e-4 * scale:
            continue
        lo, hi = s[max(k - 1, 0)], s[min(k + 1, len(s) - 1)]
        res = minimize_scalar(
            lambda sv: g2_on_curve(sv)[0],
            bounds=(lo, hi), method="bounded",
            options={"xatol": 1e-13},
        )
        val, q = g2_on_curve(res.x)
        if val <= RESIDUAL_TOL:
            out.append(q)
    return out


def _project_onto(component, p, max_iter=40):
    q = np.asarray(p, dtype=float).copy()
    for _ in range(max_iter):
        g = complex(component.value(q[0], q[1], 0.0)).real
        if abs(g) <= TRACE_TOL:
            break
        a, b = _real_grad(component, q)
        n2 = a * a + b * b
        if n2 < 1e-30:
            break
        q = q - (g / n2) * np.array([a, b])
    return q


# ---------------------------------------------------------------------------
# activity
# ---------------------------------------------------------------------------

def classify_activity(
    point: SpecialPoint,
    x_dir,
    bridges: BridgeConfig,
    components: Mapping[str, SingularComponent],
) -> SpecialPoint:
    """Decide whether a special point is active for direction ``x_dir``.

    * a point on a single curve is inactive unless the direction is
      perpendicular to the curve there; a perpendicular point is active
      iff s * sign(x . n) = +1;
    * a transverse crossing (components in determinant-positive order) is
      active iff sign(x1~*b2 - x2~*a2) = s1 and sign(-x1~*b1 + x2~*a1) = s2;
      a sign expression inside the 1e-12 dead zone makes the direction a
      boundary case (the point degenerates to a perpendicular point of
      one curve) and is reported as "boundary";
    * a tangential touch requires compatible bypass signs on both curves
      and is active only for the single perpendicular direction selected
      by them.

    Returns a copy of the point with activity, signs and reason filled
    in.  ``contributing`` is set for SOS points (contributing = active);
    crossings get it after the additivity check.
    """
    xt = np.asarray(x_dir, dtype=float)
    xt = xt / np.linalg.norm(xt)

    if point.kind == "sos":
        cid = point.components[0]
        fr = frame_at(components[cid], point.location)
        s = bridges.sign(cid)
        tang = float(np.dot(xt, fr.t))
        if abs(tang) > 1e-8:
            return replace(point, signs=(s,), activity="inactive", contributing=False,
                           reason="direction not perpendicular to the curve")
        dot = float(np.dot(xt, fr.n))
        if s * np.sign(dot) > 0:
            return replace(point, signs=(s,), activity="active", contributing=True,
                           reason="perpendicular direction on the bypassed side")
        return replace(point, signs=(s,), activity="inactive", contributing=False,
                       reason="perpendicular direction on the decaying side")

    if point.kind == "crossing":
        cid1, cid2 = point.components
        a1, b1 = _real_grad(components[cid1], point.location)
        a2, b2 = _real_grad(components[cid2], point.location)
        s1, s2 = bridges.sign(cid1), bridges.sign(cid2)
        e1 = xt[0] * b2 - xt[1] * a2
        e2 = -xt[0] * b1 + xt[1] * a1
        scale1 = np.hypot(a2, b2)
        scale2 = np.hypot(a1, b1)
        if abs(e1) <= SIGN_DEAD_ZONE * scale1 or abs(e2) <= SIGN_DEAD_ZONE * scale2:
            return replace(point, signs=(s1, s2), activity="boundary", contributing=False,
                           reason="direction on an activity boundary (perpendicular to one curve)")
        if np.sign(e1) == s1 and np.sign(e2) == s2:
            return replace(point, signs=(s1, s2), activity="active",
                           reason="direction inside the active quadrant")
        return replace(point, signs=(s1, s2), activity="inactive", contributing=False,
                       reason="direction outside the active quadrant")

    if point.kind == "tangential":
        cid1, cid2 = point.components
        fr1 = frame_at(components[cid1], point.location)
        fr2 = frame_at(components[cid2], point.location)
        s1, s2 = bridges.sign(cid1), bridges.sign(cid2)
        parallel = float(np.dot(fr1.n, fr2.n))
        if s1 * s2 != int(np.sign(parallel)):
            raise UnsupportedConfigurationError(
                f"incompatible bypass signs at tangential touch {point.location}: "
                "both curves share the deformation there"
            )
        tang = float(np.dot(xt, fr1.t))
        if abs(tang) > 1e-8:
            return replace(point, signs=(s1, s2), activity="inactive", contributing=False,
                           reason="direction not perpendicular to the touching curves")
        if s1 * np.sign(float(np.dot(xt, fr1.n))) > 0:
            return replace(point, signs=(s1, s2), activity="active", contributing=False,
                           reason="perpendicular direction selected by the joint bypass"
                                  " (no closed-form contribution available)")
        return replace(point, signs=(s1, s2), activity="inactive", contributing=False,
                       reason="perpendicular direction on the decaying side")

    # any other real point is inactive outright
    return replace(point, activity="inactive", contributing=False,
                   reason="not a singular point")


# ---------------------------------------------------------------------------
# additive splitting at crossings
# ---------------------------------------------------------------------------

def additivity_structural(model: WaveFunctionModel, crossing: SpecialPoint) -> bool:
    """Term-wise additivity: no single term is singular on both curves.

    True iff no term carries strictly positive exponents for the two
    crossing components simultaneously; the sum then splits into a part
    regular on one curve plus a part regular on the other.
    """
    cid1, cid2 = crossing.components[:2]
    for term in model.terms:
        if term.exponent(cid1) > 0 and term.exponent(cid2) > 0:
            return False
    return True


def additivity_monodromy(
    model: WaveFunctionModel,
    crossing: SpecialPoint,
    probe,
    tol: float = 1e-10,
) -> bool:
    """Loop-continuation test for additive splitting at a crossing.

    Continues the model value at ``probe`` along positive loops around
    each curve (a loop multiplies a term by exp(-2*pi*i*mu)) and checks

        F + F(loop1 loop2) - F(loop1) - F(loop2) = 0

    to 1e-10 relative.  Requires every term exponent at the two crossing
    components to be strictly below 1 (growth milder than a simple pole);
    raises ValueError otherwise.
    """
    cid1, cid2 = crossing.components[:2]
    px, py = float(probe[0]), float(probe[1])

    base_terms = []
    for term in model.terms:
        mu1, mu2 = term.exponent(cid1), term.exponent(cid2)
        if mu1 >= 1.0 or mu2 >= 1.0:
            raise ValueError(
                "monodromy test requires all exponents below 1 at the crossing "
                f"components, got ({mu1}, {mu2})"
            )
        value = complex(term.amplitude.evaluate(px, py, 0.0))
        for cid, mu in term.factors:
            w = complex(model.component(cid).value(px, py, 0.0))
            if abs(w) < 1e-14:
                raise ValueError("probe point lies on a singular curve")
            value *= np.power(w, -mu)
        base_terms.append((value, mu1, mu2))

    def continued(loop1: bool, loop2: bool) -> complex:
        total = 0.0 + 0.0j
        for value, mu1, mu2 in base_terms:
            phase = 1.0 + 0.0j
            if loop1:
                phase *= np.exp(-2j * np.pi * mu1)
            if loop2:
                phase *= np.exp(-2j * np.pi * mu2)
            total += value * phase
        return total

    scale = sum(abs(v) for v, _, _ in base_terms)
    residual = abs(
        continued(False, False) + continued(True, True)
        - continued(True, False) - continued(False, True)
    )
    return residual <= tol * max(scale, 1e-300)
