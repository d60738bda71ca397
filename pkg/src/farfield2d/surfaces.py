"""Construction and verification of deformed integration surfaces.

The integration surface is the graph xi^r + i*eta(xi^r) of a small real
vector field over a rectangular window.  Near each contributing point a
local patch (built in adapted coordinates) lets the integrand grow; on
the rest of the singular curves the field keeps the surface on the
configured bypass side while decaying the exponential factor; everywhere
else it defaults to a small displacement against the observation
direction.  The field is tapered to (almost) zero at the window boundary
so that truncating the integral does not create a spurious boundary
wall; the taper floor keeps the decay and bypass signs strict.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import uniform_filter
from scipy.spatial import cKDTree

from .bridges import BridgeConfig
from .classify import SpecialPoint
from .errors import (
    DegenerateSaddleError,
    PatchConstructionError,
    SurfaceVerificationError,
    UnsupportedConfigurationError,
)
from .expressions import SingularComponent, WaveFunctionModel
from .tracing import RealTrace, alpha_at, frame_at, trace_real_curves

__all__ = [
    "FieldParams",
    "DeformationField",
    "SurfaceReport",
    "sos_patch",
    "crossing_patch",
    "build_global_field",
    "verify_field",
]

EPSILON_LEVELS = (0.25, 0.5, 0.75, 1.0)


def _core_taper(radial, rho):
    """1 inside the patch core, smoothly fading to 0 by 1.6 * rho.

    Applied to the growing (tangential) parts of the patch formulas so
    their extensions past the core stay side-correct on curved traces."""
    t = np.clip((1.6 * rho - radial) / (0.6 * rho), 0.0, 1.0)
    return np.where(radial <= rho, 1.0, 3 * t**2 - 2 * t**3)


@dataclass(frozen=True)
class FieldParams:
    """Tunables of the global field construction."""

    rho: float = 0.3            # patch radius in adapted coordinates
    beta: float = 0.05          # patch field amplitude
    eta_max: float = 0.5        # hard bound on |eta|
    delta_frac: float = 0.1     # default displacement = delta_frac * eta_max
    band_dist: float | None = None   # half-width of the near-curve band
    far_ramp: bool = True       # grow the default displacement to eta_max
    ramp_width: float = 0.5     # distance over which the far ramp saturates
    seam_frac: float = 0.5      # patch blend-seam width relative to rho
    taper: bool = False         # fade the field toward the window boundary
    taper_width: float | None = None
    chi_min: float = 1e-3       # taper floor (keeps signs strict)
    clearance_tol: float = 1e-9
    side_margin: float = 0.05   # minimal bypass-side margin of the band field
    mag_growth: float = 2.5     # exterior magnitude growth rate away from patches
    n_angles: int = 240         # direction samples for the band field

    @property
    def delta(self) -> float:
        return self.delta_frac * self.eta_max


# ---------------------------------------------------------------------------
# local patches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SosPatch:
    """Local field near an isolated perpendicular-direction point.

    Adapted coordinates: zeta1 along the curve tangent scaled by the
    gradient, zeta2 = g across it.  The across coordinate is evaluated
    exactly (so the field keeps the bypass side on the true curved trace
    even well outside the core), while the pull-back of the field vector
    uses the inverse of the linearised map, a scaled rotation.
    """

    component: SingularComponent
    point: tuple[float, float]
    a: float
    b: float
    alpha: float
    s: int
    rho: float
    beta: float

    @property
    def component_id(self) -> str:
        return self.component.id

    @property
    def kind(self) -> str:
        return "sos"

    @property
    def gradnorm(self) -> float:
        return float(np.hypot(self.a, self.b))

    @property
    def extent(self) -> float:
        return self.rho / self.gradnorm

    def zeta(self, pts: np.ndarray) -> np.ndarray:
        d = pts - np.asarray(self.point)
        z1 = self.b * d[..., 0] - self.a * d[..., 1]
        z2 = np.asarray(self.component.value(pts[..., 0], pts[..., 1], 0.0),
                        dtype=complex).real
        return np.stack([z1, z2], axis=-1)

    def radial(self, pts: np.ndarray) -> np.ndarray:
        z = self.zeta(pts)
        return np.hypot(z[..., 0], z[..., 1])

    def region(self, pts: np.ndarray, pad: float = 0.0) -> np.ndarray:
        return self.radial(pts) <= self.rho + pad

    def eta(self, pts: np.ndarray) -> np.ndarray:
        z = self.zeta(pts)
        psi = _core_taper(self.radial(pts), self.rho)
        e1 = -np.sign(self.alpha) * self.beta * self.s * z[..., 0] * psi
        e2 = abs(self.alpha) * self.beta * self.s * (
            self.rho**2 - 2.0 * psi * z[..., 1] ** 2)
        n2 = self.a**2 + self.b**2
        h1 = (self.b * e1 + self.a * e2) / n2
        h2 = (-self.a * e1 + self.b * e2) / n2
        return np.stack([h1, h2], axis=-1)

    def boundary_amplitude(self) -> float:
        t = np.linspace(0, 2 * np.pi, 64)
        pts = (np.asarray(self.point)[None, :]
               + self.rho / self.gradnorm * np.column_stack([np.cos(t), np.sin(t)]))
        return float(np.linalg.norm(self.eta(pts), axis=1).max())

    def with_beta(self, beta: float) -> "SosPatch":
        return SosPatch(self.component, self.point, self.a, self.b,
                        self.alpha, self.s, self.rho, beta)


def sos_patch(
    component: SingularComponent,
    point,
    s: int,
    rho: float,
    beta: float,
    clearance_components: list[SingularComponent] | None = None,
    clearance_tol: float = 1e-9,
    max_halvings: int = 8,
) -> SosPatch:
    """Build (and locally validate) the patch field around an isolated
    perpendicular-direction point.

    In adapted coordinates the field is

        eta''_1 = -sign(alpha) * beta * s * zeta1,
        eta''_2 = |alpha| * beta * s * (rho^2 - 2 zeta2^2),

    pulled back through the inverse of the linearised coordinate map.  On
    the curve the across component is |alpha| beta s rho^2, never zero or
    tangent, and the phase decays on the patch boundary.  ``beta`` is
    halved up to ``max_halvings`` times until the sampled clearance scan
    passes; failure afterwards raises :class:`PatchConstructionError`.
    """
    fr = frame_at(component, point)
    alpha = alpha_at(component, point)
    if alpha == 0.0:
        raise DegenerateSaddleError(
            f"curvature coefficient vanishes at {tuple(point)}; the quadratic "
            "local model degenerates"
        )
    patch = SosPatch(
        component=component,
        point=(float(point[0]), float(point[1])),
        a=fr.a, b=fr.b, alpha=alpha, s=int(s), rho=float(rho), beta=float(beta),
    )
    comps = clearance_components or [component]
    for _ in range(max_halvings + 1):
        if _patch_clearance_ok(patch, comps, clearance_tol):
            return patch
        patch = patch.with_beta(patch.beta / 2.0)
    raise PatchConstructionError(
        f"patch at {tuple(point)} failed the clearance scan even after "
        f"{max_halvings} halvings of beta"
    )


def _patch_clearance_ok(patch, components, clearance_tol) -> bool:
    # polar sample of the patch disk, denser near the curve (zeta2 ~ 0)
    t = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    r = patch.rho * np.concatenate([np.linspace(0.02, 1.0, 12), [0.999]])
    Z1 = np.outer(r, np.cos(t)).ravel()
    Z2 = np.outer(r, np.sin(t)).ravel()
    # include points exactly on the curve
    z1_line = np.linspace(-patch.rho, patch.rho, 33)
    Z1 = np.concatenate([Z1, z1_line])
    Z2 = np.concatenate([Z2, np.zeros_like(z1_line)])
    n2 = patch.a**2 + patch.b**2
    px = patch.point[0] + (patch.b * Z1 + patch.a * Z2) / n2
    py = patch.point[1] + (-patch.a * Z1 + patch.b * Z2) / n2
    pts = np.column_stack([px, py])
    eta = patch.eta(pts)
    for eps in EPSILON_LEVELS:
        zx = pts[:, 0] + 1j * eps * eta[:, 0]
        zy = pts[:, 1] + 1j * eps * eta[:, 1]
        for comp in components:
            vals = np.abs(np.asarray(comp.value(zx, zy, 0.0), dtype=complex))
            if np.any(vals < clearance_tol):
                return False
    return True


@dataclass(frozen=True)
class CrossingPatch:
    """Local field near an active transverse crossing.

    Adapted coordinates zeta_i are the exact values of the two defining
    functions (determinant-positive order), so the field keeps each
    bypass side on the true traces; the pull-back of the field vector
    uses the linearised inverse map.  The patch region is the pull-back
    of the square |zeta_i| <= rho.
    """

    components: tuple[SingularComponent, SingularComponent]
    point: tuple[float, float]
    jac: np.ndarray        # rows (a1,b1), (a2,b2)
    inv: np.ndarray
    s1: int
    s2: int
    xprime: tuple[float, float]
    rho: float
    beta: float

    @property
    def component_ids(self) -> tuple[str, str]:
        return (self.components[0].id, self.components[1].id)

    @property
    def kind(self) -> str:
        return "crossing"

    @property
    def extent(self) -> float:
        return self.rho * float(np.linalg.norm(self.inv, 2)) * np.sqrt(2.0)

    def zeta(self, pts: np.ndarray) -> np.ndarray:
        z1 = np.asarray(self.components[0].value(pts[..., 0], pts[..., 1], 0.0),
                        dtype=complex).real
        z2 = np.asarray(self.components[1].value(pts[..., 0], pts[..., 1], 0.0),
                        dtype=complex).real
        return np.stack([z1, z2], axis=-1)

    def radial(self, pts: np.ndarray) -> np.ndarray:
        """Region measure: exact values localised by the linearised map.

        The exact-value sublevel set is a tube following the whole curves
        (it would engulf every other intersection of the same pair); the
        linearised term anchors the region to this crossing."""
        z = self.zeta(pts)
        rr = np.maximum(np.abs(z[..., 0]), np.abs(z[..., 1]))
        d = pts - np.asarray(self.point)
        zl = d @ self.jac.T
        rl = np.maximum(np.abs(zl[..., 0]), np.abs(zl[..., 1]))
        return np.maximum(rr, 0.5 * rl)

    def region(self, pts: np.ndarray, pad: float = 0.0) -> np.ndarray:
        return self.radial(pts) <= self.rho + pad

    def eta(self, pts: np.ndarray) -> np.ndarray:
        z = self.zeta(pts)
        psi = _core_taper(self.radial(pts), self.rho)
        x1, x2 = self.xprime
        tot = abs(x1) + abs(x2)
        e1 = self.beta * (self.s1 * self.rho - 2.0 * (tot / x1) * np.abs(z[..., 0]) * psi)
        e2 = self.beta * (self.s2 * self.rho - 2.0 * (tot / x2) * np.abs(z[..., 1]) * psi)
        return np.stack([e1, e2], axis=-1) @ self.inv.T

    def boundary_amplitude(self) -> float:
        t = np.linspace(0, 2 * np.pi, 64)
        ring = self.rho * np.column_stack([np.cos(t), np.sin(t)])
        ring /= np.maximum(np.abs(ring).max(axis=1, keepdims=True) / self.rho, 1e-300)
        pts = np.asarray(self.point)[None, :] + ring @ self.inv.T
        return float(np.linalg.norm(self.eta(pts), axis=1).max())


def crossing_patch(
    c1: SingularComponent,
    c2: SingularComponent,
    point,
    s1: int,
    s2: int,
    x_dir,
    rho: float,
    beta: float,
) -> CrossingPatch:
    """Patch field around a transverse crossing, components already in
    determinant-positive order.

    The direction must lie in the crossing's active quadrant, i.e. the
    components of x' (the direction mapped to adapted coordinates) must
    carry the bypass signs; otherwise the patch is refused and the point
    must be treated as inactive.
    """
    xt = np.asarray(x_dir, dtype=float)
    xt = xt / np.linalg.norm(xt)
    a1, b1 = _grad(c1, point)
    a2, b2 = _grad(c2, point)
    delta = a1 * b2 - a2 * b1
    if delta <= 0:
        raise ValueError("components must be ordered so the determinant is positive")
    jac = np.array([[a1, b1], [a2, b2]])
    inv = np.array([[b2, -b1], [-a2, a1]]) / delta
    xp = xt @ inv
    if np.sign(xp[0]) != s1 or np.sign(xp[1]) != s2:
        raise UnsupportedConfigurationError(
            f"direction {tuple(xt)} is outside the active quadrant of the "
            f"crossing at {tuple(point)}; patch refused"
        )
    return CrossingPatch(
        components=(c1, c2),
        point=(float(point[0]), float(point[1])),
        jac=jac, inv=inv, s1=int(s1), s2=int(s2),
        xprime=(float(xp[0]), float(xp[1])),
        rho=float(rho), beta=float(beta),
    )


def _grad(component, point):
    a, b = component.grad(point[0], point[1], 0.0)
    return complex(a).real, complex(b).real


# ---------------------------------------------------------------------------
# the global field
# ---------------------------------------------------------------------------

@dataclass
class DeformationField:
    """Grid-native deformation field defining the integration surface.

    Nodes sit at the centres of an n1 x n2 cell grid over ``window``;
    ``eta`` has shape (n1, n2, 2).  ``patch_mask`` marks nodes governed by
    local patches (including their one-cell blend ring); the decay
    requirement applies to all other nodes.
    """

    window: tuple[float, float, float, float]
    eta: np.ndarray
    x_dir: np.ndarray
    patch_mask: np.ndarray
    patches: list = dc_field(default_factory=list)
    traces: dict = dc_field(default_factory=dict)
    signs: dict = dc_field(default_factory=dict)
    params: FieldParams = dc_field(default_factory=FieldParams)
    chi: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.eta.shape[0], self.eta.shape[1]

    @property
    def h(self) -> tuple[float, float]:
        n1, n2 = self.shape
        x0, x1, y0, y1 = self.window
        return (x1 - x0) / n1, (y1 - y0) / n2

    def axes(self):
        n1, n2 = self.shape
        x0, x1, y0, y1 = self.window
        h1, h2 = self.h
        xs = x0 + (np.arange(n1) + 0.5) * h1
        ys = y0 + (np.arange(n2) + 0.5) * h2
        return xs, ys

    def nodes(self):
        xs, ys = self.axes()
        return np.meshgrid(xs, ys, indexing="ij")

    def eta_at(self, pts: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of the field at arbitrary points."""
        pts = np.atleast_2d(pts)
        xs, ys = self.axes()
        h1, h2 = self.h
        fx = np.clip((pts[:, 0] - xs[0]) / h1, 0.0, len(xs) - 1.0)
        fy = np.clip((pts[:, 1] - ys[0]) / h2, 0.0, len(ys) - 1.0)
        i0 = np.clip(np.floor(fx).astype(int), 0, len(xs) - 2)
        j0 = np.clip(np.floor(fy).astype(int), 0, len(ys) - 2)
        tx = (fx - i0)[:, None]
        ty = (fy - j0)[:, None]
        e00 = self.eta[i0, j0]
        e10 = self.eta[i0 + 1, j0]
        e01 = self.eta[i0, j0 + 1]
        e11 = self.eta[i0 + 1, j0 + 1]
        return (e00 * (1 - tx) * (1 - ty) + e10 * tx * (1 - ty)
                + e01 * (1 - tx) * ty + e11 * tx * ty)

    def scaled(self, eps: float) -> "DeformationField":
        out = DeformationField(
            window=self.window, eta=self.eta * eps, x_dir=self.x_dir,
            patch_mask=self.patch_mask, patches=self.patches,
            traces=self.traces, signs=self.signs, params=self.params, chi=self.chi,
        )
        return out

    def to_csv(self, path) -> None:
        X, Y = self.nodes()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "eta1", "eta2"])
            for i in range(X.shape[0]):
                for j in range(X.shape[1]):
                    w.writerow([repr(float(X[i, j])), repr(float(Y[i, j])),
                                repr(float(self.eta[i, j, 0])),
                                repr(float(self.eta[i, j, 1]))])

    def decay_to_csv(self, path) -> None:
        """Heat-map export of x_dir . eta (the log-magnitude driver)."""
        X, Y = self.nodes()
        d = self.eta @ self.x_dir
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "decay"])
            for i in range(X.shape[0]):
                for j in range(X.shape[1]):
                    w.writerow([repr(float(X[i, j])), repr(float(Y[i, j])),
                                repr(float(d[i, j]))])


def build_global_field(
    model: WaveFunctionModel,
    bridges: BridgeConfig,
    x_dir,
    points: list[SpecialPoint],
    window: tuple[float, float, float, float],
    grid: tuple[int, int] = (400, 400),
    params: FieldParams | None = None,
    traces: dict[str, RealTrace] | None = None,
) -> DeformationField:
    """Assemble the global piecewise-smooth deformation field.

    Contributing points from ``points`` receive local patches; nodes in a
    band around the remaining singular curves get a direction that stays
    on the bypass side of every nearby curve while opposing ``x_dir``,
    with its magnitude fixed by a clearance line search; all other nodes
    default to a small displacement against ``x_dir``.  The pieces are
    blended over roughly one grid cell and the whole field is tapered
    toward the window boundary.
    """
    params = params or FieldParams()
    xt = np.asarray(x_dir, dtype=float)
    xt = xt / np.linalg.norm(xt)
    x0, x1, y0, y1 = window
    n1, n2 = grid
    comp_map = model.component_map

    field = DeformationField(
        window=window,
        eta=np.zeros((n1, n2, 2)),
        x_dir=xt,
        patch_mask=np.zeros((n1, n2), dtype=bool),
        params=params,
        signs=dict(bridges.items()),
    )
    X, Y = field.nodes()
    pts_flat = np.column_stack([X.ravel(), Y.ravel()])
    h1, h2 = field.h
    hmax = max(h1, h2)

    # --- traces ---------------------------------------------------------
    if traces is None:
        cell = min((x1 - x0), (y1 - y0)) / 300.0
        traces = {c.id: trace_real_curves(c, window, cell) for c in model.components}
    field.traces = traces

    # --- taper ----------------------------------------------------------
    span = min(x1 - x0, y1 - y0)
    taper_width = params.taper_width if params.taper_width is not None else 0.10 * span
    if params.taper:
        d_edge = np.minimum.reduce([X - x0, x1 - X, Y - y0, y1 - Y])
        t = np.clip(d_edge / max(taper_width, 1e-12), 0.0, 1.0)
        chi = params.chi_min + (1.0 - params.chi_min) * (3 * t**2 - 2 * t**3)
    else:
        chi = np.ones((n1, n2))
    field.chi = chi

    # --- patches at contributing points ----------------------------------
    contributing = [p for p in points if p.contributing]
    patches = []
    for p in contributing:
        if p.kind == "sos":
            comp = comp_map[p.components[0]]
            patches.append(sos_patch(
                comp, p.location, bridges.sign(comp.id), params.rho, params.beta,
                clearance_components=list(model.components),
                clearance_tol=params.clearance_tol,
            ))
        elif p.kind == "crossing":
            c1 = comp_map[p.components[0]]
            c2 = comp_map[p.components[1]]
            patches.append(crossing_patch(
                c1, c2, p.location, bridges.sign(c1.id), bridges.sign(c2.id),
                xt, params.rho, params.beta,
            ))
        else:
            raise UnsupportedConfigurationError(
                f"no contribution patch is available for a {p.kind} point"
            )
    field.patches = patches

    # patch blend weights: u = 1 inside the core, smoothly fading to 0 over
    # a wide seam so the surface (and hence the oscillatory phase) never
    # jumps between the patch scale and the exterior scale; seams shrink
    # automatically to keep off neighbouring cores and foreign curves
    comp_ids = [c.id for c in model.components]
    dists, normals = _distance_fields(traces, comp_ids, pts_flat, bridges)

    radial = []
    core_masks = []
    for pa in patches:
        rr = pa.radial(pts_flat)
        radial.append(rr)
        core_masks.append(rr <= pa.rho)
    core_mask = (np.any(core_masks, axis=0) if core_masks
                 else np.zeros(len(pts_flat), dtype=bool))
    for i in range(len(patches)):
        for j in range(i + 1, len(patches)):
            if np.any(core_masks[i] & core_masks[j]):
                raise PatchConstructionError(
                    f"patches at {patches[i].point} and {patches[j].point} overlap; "
                    "reduce rho or separate the contributing points"
                )

    patch_u = []
    for k, pa in enumerate(patches):
        seam = _seam_width(pa, hmax, params.seam_frac)
        own = set(
            [pa.component_id] if pa.kind == "sos" else list(pa.component_ids))
        forbidden = np.zeros(len(pts_flat), dtype=bool)
        for j, other in enumerate(core_masks):
            if j != k:
                forbidden |= other
        for cid in comp_ids:
            if cid in own or cid not in dists:
                continue
            forbidden |= dists[cid] < 2.0 * hmax
        min_seam = 3.0 * hmax * (np.hypot(pa.a, pa.b) if pa.kind == "sos"
                                 else float(np.linalg.norm(pa.jac, 2)))
        for _ in range(24):
            if not np.any(forbidden & (radial[k] < pa.rho + seam)):
                break
            seam *= 0.75
            if seam < min_seam:
                raise PatchConstructionError(
                    f"patch at {pa.point} cannot fit a blend seam; reduce rho "
                    "or separate the special points"
                )
        t = np.clip((pa.rho + seam - radial[k]) / seam, 0.0, 1.0)
        u = 3 * t**2 - 2 * t**3
        patch_u.append(u)
        if np.any((u > 0) & (chi.ravel() < 0.99)):
            raise PatchConstructionError(
                f"patch at {pa.point} reaches the boundary taper; enlarge the window"
            )
    u_total = np.sum(patch_u, axis=0) if patch_u else np.zeros(len(pts_flat))
    field.patch_mask = (u_total > 0.0).reshape(n1, n2)

    # --- near-curve band --------------------------------------------------
    # must stay well inside the patch inradius: the side constraints of an
    # active crossing are jointly infeasible outside its patch, so their
    # influence zone (2 * band) has to end before the patch boundary
    band = params.band_dist
    if band is None:
        band = max(6 * hmax, 0.015 * span)
        inradii = []
        for pa in patches:
            if pa.kind == "sos":
                inradii.append(pa.rho / pa.gradnorm)
            else:
                inradii.append(pa.rho / float(np.linalg.norm(pa.jac, 2)))
        if inradii:
            band = min(band, 0.45 * min(inradii))
        band = max(band, 2.5 * hmax)

    if dists:
        dmin = np.minimum.reduce(list(dists.values()))
    else:
        dmin = np.full(len(pts_flat), np.inf)
    # the blend weight w is nonzero out to 3*band, so the band direction and
    # magnitude fields must cover that whole zone
    band_nodes = np.flatnonzero((dmin < 3.0 * band) & ~core_mask)

    # default displacement: small near the action, ramping up to eta_max in
    # the far zone so the truncated tail is exponentially suppressed
    if params.far_ramp:
        t = np.clip((dmin - 2.0 * band) / max(params.ramp_width, 1e-12), 0.0, 1.0)
        mag_def = params.delta + (3 * t**2 - 2 * t**3) * (params.eta_max - params.delta)
    else:
        mag_def = np.full(len(pts_flat), params.delta)

    # near a patch the exterior magnitude must stay comparable to the patch
    # field and may only grow at a bounded rate with distance, or the seam
    # turns into a phase wall the quadrature cannot resolve
    mag_cap = np.full(len(pts_flat), np.inf)
    for k, pa in enumerate(patches):
        scale = (pa.gradnorm if pa.kind == "sos"
                 else float(np.linalg.norm(pa.jac, 2)))
        dist = np.maximum(radial[k] - pa.rho, 0.0) / scale
        mag_cap = np.minimum(mag_cap,
                             pa.boundary_amplitude() + params.mag_growth * dist)
    mag_def = np.minimum(mag_def, mag_cap)
    eta_ext = -mag_def[:, None] * xt[None, :]

    if len(band_nodes):
        v_hat, feas = _band_directions(
            band_nodes, dists, normals, bridges, comp_ids, xt, band,
            params.n_angles, params.side_margin,
        )
        if not np.all(feas):
            bad = band_nodes[~feas][0]
            raise SurfaceVerificationError(
                "no decaying bypass direction exists near "
                f"({pts_flat[bad,0]:.4f}, {pts_flat[bad,1]:.4f}); an active point "
                "was left without a patch"
            )
        v_grid = np.zeros((n1, n2, 2))
        v_grid.reshape(-1, 2)[band_nodes] = v_hat
        band_mask = np.zeros(n1 * n2, dtype=bool)
        band_mask[band_nodes] = True
        v_grid = _masked_smooth(v_grid, band_mask.reshape(n1, n2), passes=2)
        norm = np.linalg.norm(v_grid, axis=-1, keepdims=True)
        v_grid = np.where(norm > 1e-12, v_grid / np.maximum(norm, 1e-300), 0.0)

        f = _clearance_line_search(
            model, pts_flat, band_nodes, v_grid.reshape(-1, 2)[band_nodes],
            params.eta_max, params.clearance_tol,
        )
        f = np.minimum(f, mag_cap[band_nodes])
        f_grid = np.zeros((n1, n2))
        f_grid.reshape(-1)[band_nodes] = f
        f_grid = _masked_smooth(f_grid[..., None], band_mask.reshape(n1, n2), passes=2)[..., 0]

        # wide transition from the band field into the default zone
        t = np.clip((3.0 * band - dmin) / (2.0 * band), 0.0, 1.0)
        w = (3 * t**2 - 2 * t**3).reshape(n1, n2)
        eta_band = v_grid * f_grid[..., None]
        eta_ext = (w[..., None] * eta_band
                   + (1.0 - w[..., None]) * eta_ext.reshape(n1, n2, 2)).reshape(-1, 2)

    eta_ext *= chi.reshape(-1, 1)

    # --- combine with patches (the patch formulas extend smoothly past
    # their core, so the weighted mix stays valid across the seam) --------
    if patches:
        eta_flat = np.maximum(1.0 - u_total, 0.0)[:, None] * eta_ext
        for pa, u in zip(patches, patch_u):
            idx = np.flatnonzero(u > 0)
            eta_flat[idx] += u[idx, None] * pa.eta(pts_flat[idx])
        overshoot = u_total > 1.0
        if np.any(overshoot):
            eta_flat[overshoot] /= u_total[overshoot, None]
    else:
        eta_flat = eta_ext

    field.eta = eta_flat.reshape(n1, n2, 2)
    return field


def _seam_width(patch, hmax: float, seam_frac: float) -> float:
    """Patch blend-seam width in adapted units: a sizeable fraction of the
    core radius, and never thinner than a dozen grid cells."""
    if patch.kind == "sos":
        scale = float(np.hypot(patch.a, patch.b))
    else:
        scale = float(np.linalg.norm(patch.jac, 2))
    return max(seam_frac * patch.rho, 12.0 * hmax * scale)


def _distance_fields(traces, comp_ids, pts_flat, bridges):
    """Distance to each traced curve and the unit normal at the nearest
    vertex, for every grid node."""
    dists, normals = {}, {}
    for cid in comp_ids:
        tr = traces.get(cid)
        if tr is None or not tr.polylines:
            continue
        verts = tr.all_vertices()
        grads = tr.all_gradients()
        tree = cKDTree(verts)
        d, idx = tree.query(pts_flat)
        g = grads[idx]
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        normals[cid] = g / np.maximum(norm, 1e-300)
        dists[cid] = d
    return dists, normals


def _band_directions(band_nodes, dists, normals, bridges, comp_ids, xt, band,
                     n_angles, side_margin):
    """Per-node unit direction keeping every nearby curve on its bypass
    side while opposing the observation direction.

    Sampled optimisation over direction candidates: among directions whose
    weighted side margins s_j * (v . n_j) stay positive (weights fade as a
    curve leaves its influence zone) and whose decay margin -(v . x) is
    positive, maximise the decay margin with a mild preference for side
    margin; fall back to the balanced max-min direction where that set
    collapses (e.g. right at a patch ring).
    """
    thetas = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    dirs = np.column_stack([np.cos(thetas), np.sin(thetas)])  # (K, 2)

    m = len(band_nodes)
    decay = np.broadcast_to(-(dirs @ xt)[None, :], (m, len(dirs))).copy()
    min_side = np.full((m, len(dirs)), np.inf)

    for cid in comp_ids:
        if cid not in dists:
            continue
        d = dists[cid][band_nodes]
        w = np.clip(2.0 - d / band, 0.0, 1.0)
        n = normals[cid][band_nodes]
        s = bridges.sign(cid)
        side = s * (n @ dirs.T)  # (m, K)
        # relax the side margin as the curve leaves the influence zone; at
        # w = 0 the offset 2(1-w) = 2 exceeds any unit margin (vacuous)
        faded = side + 2.0 * (1.0 - w[:, None])
        min_side = np.minimum(min_side, faded)

    feasible = (min_side > 1e-9) & (decay > 1e-9)
    preferred = feasible & (min_side >= side_margin)
    # decay-first choice where possible, else any feasible direction, else
    # the balanced max-min compromise (reported infeasible when <= 0)
    objective = decay + 0.1 * np.minimum(min_side, 0.2)
    balanced = np.minimum(min_side, decay)

    score = np.where(preferred, objective,
                     np.where(feasible, objective - 10.0, balanced - 100.0))
    best = np.argmax(score, axis=1)
    rows = np.arange(m)
    ok = balanced[rows, best] > 1e-9
    return dirs[best], ok


def _clearance_line_search(model, pts_flat, band_nodes, v_hat, f0, clearance_tol):
    """Largest magnitude (halving from f0) whose scaled displacements
    clear every component."""
    px = pts_flat[band_nodes, 0]
    py = pts_flat[band_nodes, 1]
    f = np.full(len(band_nodes), float(f0))
    floor = 10.0 * clearance_tol
    for _ in range(14):
        bad = np.zeros(len(band_nodes), dtype=bool)
        for eps in EPSILON_LEVELS:
            zx = px + 1j * eps * f * v_hat[:, 0]
            zy = py + 1j * eps * f * v_hat[:, 1]
            for comp in model.components:
                vals = np.abs(np.asarray(comp.value(zx, zy, 0.0), dtype=complex))
                bad |= vals < floor
        if not np.any(bad):
            break
        f = np.where(bad, f / 2.0, f)
    return f


def _masked_smooth(arr, mask, passes=2):
    """Uniform 3x3 smoothing restricted to a mask (values outside are
    neither read nor written)."""
    out = arr.copy()
    mask_f = mask.astype(float)
    for _ in range(passes):
        num = np.empty_like(out)
        for k in range(out.shape[-1]):
            num[..., k] = uniform_filter(out[..., k] * mask_f, size=3, mode="nearest")
        den = uniform_filter(mask_f, size=3, mode="nearest")
        sm = num / np.maximum(den[..., None], 1e-12)
        out = np.where(mask[..., None], sm, out)
    return out


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class SurfaceReport:
    """Node-wise verification outcome for a deformation field."""

    clearance_min: float
    clearance_ok: bool
    flattable_ok: bool
    decay_max: float
    decay_ok: bool
    bridge_agree: int
    bridge_total: int
    bridge_ok: bool
    tangency_min: float
    tangency_ok: bool
    eta_bound_ok: bool
    max_jump: float
    notes: list = dc_field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (self.clearance_ok and self.flattable_ok and self.decay_ok
                and self.bridge_ok and self.tangency_ok and self.eta_bound_ok)

    def summary(self) -> str:
        lines = [
            f"clearance_min = {self.clearance_min:.3e} ({'ok' if self.clearance_ok else 'FAIL'})",
            f"flattability   {'ok' if self.flattable_ok else 'FAIL'}",
            f"decay_max     = {self.decay_max:.3e} ({'ok' if self.decay_ok else 'FAIL'})",
            f"bridge agree  = {self.bridge_agree}/{self.bridge_total} "
            f"({'ok' if self.bridge_ok else 'FAIL'})",
            f"tangency_min  = {self.tangency_min:.3e} ({'ok' if self.tangency_ok else 'FAIL'})",
            f"eta bound     {'ok' if self.eta_bound_ok else 'FAIL'}",
            f"max node jump = {self.max_jump:.3e} (reported)",
        ]
        lines.extend(self.notes)
        return "\n".join(lines)


def verify_field(
    field: DeformationField,
    model: WaveFunctionModel,
    x_dir=None,
    epsilons=EPSILON_LEVELS,
) -> SurfaceReport:
    """Check every invariant of a deformation field node-wise.

    Verifies: clearance of every component at every node and traced
    vertex, for the unit field and all down-scaled copies (flattability);
    strict decay of the exponential factor outside patch regions; bypass
    side and non-tangency of the field on the singular curves; the |eta|
    bound.  The largest node-to-node jump is reported (patch seams are
    blended over one cell but a residual kink remains visible there).
    """
    params = field.params
    xt = np.asarray(x_dir if x_dir is not None else field.x_dir, dtype=float)
    xt = xt / np.linalg.norm(xt)
    X, Y = field.nodes()
    E = field.eta
    notes = []

    # clearance + flattability over nodes and traced vertices
    clearance_min = np.inf
    flattable_ok = True
    vert_list = [tr.all_vertices() for tr in field.traces.values() if tr.polylines]
    verts = np.vstack(vert_list) if vert_list else np.zeros((0, 2))
    eta_v = field.eta_at(verts) if len(verts) else np.zeros((0, 2))
    for eps in epsilons:
        level_min = np.inf
        zx = X + 1j * eps * E[..., 0]
        zy = Y + 1j * eps * E[..., 1]
        for comp in model.components:
            vals = np.abs(np.asarray(comp.value(zx, zy, 0.0), dtype=complex))
            level_min = min(level_min, float(vals.min()))
        if len(verts):
            vx = verts[:, 0] + 1j * eps * eta_v[:, 0]
            vy = verts[:, 1] + 1j * eps * eta_v[:, 1]
            for comp in model.components:
                vals = np.abs(np.asarray(comp.value(vx, vy, 0.0), dtype=complex))
                level_min = min(level_min, float(vals.min()))
        clearance_min = min(clearance_min, level_min)
        if level_min < params.clearance_tol and eps < 1.0:
            flattable_ok = False
    clearance_ok = clearance_min >= params.clearance_tol
    if not clearance_ok:
        flattable_ok = False

    # decay outside patches
    d = E @ xt
    outside = ~field.patch_mask
    decay_max = float(d[outside].max()) if np.any(outside) else -np.inf
    decay_ok = decay_max <= -1e-6 * params.eta_max

    # bypass side and non-tangency on the curves
    agree = 0
    total = 0
    tangency_min = np.inf
    for cid, tr in field.traces.items():
        if not tr.polylines:
            continue
        s = field.signs.get(cid, 1)
        v = tr.all_vertices()
        g = tr.all_gradients()
        nrm = g / np.linalg.norm(g, axis=1, keepdims=True)
        ev = field.eta_at(v)
        mag = np.linalg.norm(ev, axis=1)
        nonnull = mag > 1e-12 * params.eta_max
        dot = np.einsum("ij,ij->i", ev, nrm)
        agree += int(np.sum(np.sign(dot[nonnull]) == s))
        total += int(np.sum(nonnull))
        if np.any(~nonnull):
            notes.append(f"{int(np.sum(~nonnull))} null-field vertices on {cid}")
            tangency_min = 0.0
        if np.any(nonnull):
            tangency_min = min(
                tangency_min,
                float(np.min(np.abs(dot[nonnull]) / mag[nonnull])),
            )
    bridge_ok = agree == total
    tangency_ok = tangency_min >= 0.01 if total else True
    if not total:
        tangency_min = np.inf

    # bound and continuity
    mag = np.linalg.norm(E, axis=-1)
    eta_bound_ok = bool(mag.max() <= params.eta_max * (1 + 1e-9))
    jumps = [np.abs(np.diff(E, axis=0)).max() if E.shape[0] > 1 else 0.0,
             np.abs(np.diff(E, axis=1)).max() if E.shape[1] > 1 else 0.0]
    max_jump = float(max(jumps))

    return SurfaceReport(
        clearance_min=float(clearance_min),
        clearance_ok=bool(clearance_ok),
        flattable_ok=bool(flattable_ok),
        decay_max=decay_max,
        decay_ok=bool(decay_ok),
        bridge_agree=agree,
        bridge_total=total,
        bridge_ok=bool(bridge_ok),
        tangency_min=float(tangency_min),
        tangency_ok=bool(tangency_ok),
        eta_bound_ok=eta_bound_ok,
        max_jump=max_jump,
        notes=notes,
    )
