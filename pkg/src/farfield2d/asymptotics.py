"""Closed-form leading far-field terms and their assembly.

Each contributing point yields one algebraically decaying term of the
far field.  The two building blocks are the Gaussian half-integral

    I(a) = integral exp(-i a z^2) dz   over the real line,

and the power-kernel transform

    J(mu, a; s) = integral z^(-mu) exp(-i s a z) dz
                  over the real line shifted to the bypass side,

both in closed form below.  A perpendicular-direction point on a single
curve contributes prefactor * I * J; a transverse crossing contributes
prefactor * J * J.  Amplitudes and exponents are extracted exactly from
the term structure of the model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gamma as _gamma

from .bridges import BridgeConfig
from .classify import (
    SpecialPoint,
    additivity_structural,
    classify_activity,
    find_crossings,
    find_sos_points,
)
from .errors import (
    BoundaryDirectionError,
    DegenerateSaddleError,
    NonSingularExponentError,
    UnsupportedConfigurationError,
)
from .expressions import SingularComponent, WaveFunctionModel
from .quadrature import branch_power
from .tracing import RealTrace, alpha_at, frame_at, trace_real_curves

__all__ = [
    "fresnel_I",
    "power_J",
    "SosData",
    "CrossingData",
    "sos_contribution",
    "crossing_contribution",
    "saddle2d_estimate",
    "Contribution",
    "assemble_far_field",
    "local_data_at",
]


def fresnel_I(a: float) -> complex:
    """Gaussian oscillatory integral of exp(-i a z^2) over the real line.

    Equals e^(-i pi/4) sqrt(pi/a) for a > 0 and its conjugate form for
    a < 0; a = 0 is a degenerate (curvature-free) configuration.
    """
    a = float(a)
    if a == 0.0:
        raise DegenerateSaddleError("Gaussian integral degenerates at a = 0")
    if a > 0:
        return np.exp(-1j * np.pi / 4.0) * np.sqrt(np.pi / a)
    return np.exp(1j * np.pi / 4.0) * np.sqrt(-np.pi / a)


def power_J(mu: float, a: float, s: int) -> complex:
    """Closed form of the shifted power-kernel transform.

        J(mu, a; s) = 2 pi e^(-i s mu pi / 2) a^(mu-1) / Gamma(mu)   (a > 0)
                    = 0                                              (a < 0)

    A non-positive integer mu zeroes 1/Gamma(mu): the factor is not
    singular there and the point cannot contribute, which is reported as
    :class:`NonSingularExponentError` rather than silently returning 0.
    """
    a = float(a)
    mu = float(mu)
    if a == 0.0:
        raise ValueError("a must be nonzero")
    if mu <= 0 and mu == int(mu):
        raise NonSingularExponentError(
            f"exponent {mu} is a non-positive integer: the point is not "
            "singular and not contributing"
        )
    if a < 0:
        return 0.0 + 0.0j
    return 2.0 * np.pi * np.exp(-1j * s * mu * np.pi / 2.0) * a ** (mu - 1.0) / _gamma(mu)


# ---------------------------------------------------------------------------
# per-point contributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SosData:
    """Local data of a perpendicular-direction point on one curve."""

    location: tuple[float, float]
    amplitude: complex
    mu: float
    alpha: float
    s: int
    a: float
    b: float


@dataclass(frozen=True)
class CrossingData:
    """Local data of a transverse crossing (determinant-positive order)."""

    location: tuple[float, float]
    amplitude: complex
    mu1: float
    mu2: float
    delta: float
    s1: int
    s2: int
    a1: float
    b1: float
    a2: float
    b2: float


def sos_contribution(data: SosData, x) -> complex:
    """Leading far-field term of an isolated perpendicular-direction point.

    For x = r * s * n (n the unit normal) the term is

        2 pi A e^(-i x.xi*) sqrt(pi) e^(-i s mu pi/2) / ((a^2+b^2) Gamma(mu))
        * (r / sqrt(a^2+b^2))^(mu - 3/2)
        * e^(-i pi/4)/sqrt(s alpha)     if s*alpha > 0
          e^(+i pi/4)/sqrt(-s alpha)    if s*alpha < 0.

    Directions that are not perpendicular, or perpendicular on the
    decaying side, return 0 with a warning; alpha = 0 raises.
    """
    if data.alpha == 0.0:
        raise DegenerateSaddleError("degenerate point: curvature coefficient is 0")
    if data.mu <= 0 and data.mu == int(data.mu):
        raise NonSingularExponentError(
            f"exponent {data.mu} is a non-positive integer; not contributing"
        )
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    xt = x / r
    norm = np.hypot(data.a, data.b)
    n = np.array([data.a, data.b]) / norm
    t = np.array([-data.b, data.a]) / norm
    if abs(float(np.dot(xt, t))) > 1e-8:
        warnings.warn("direction is not perpendicular to the curve; the point "
                      "is inactive and contributes 0")
        return 0.0 + 0.0j
    if data.s * np.sign(float(np.dot(xt, n))) <= 0:
        warnings.warn("perpendicular direction on the decaying side; the point "
                      "is inactive and contributes 0")
        return 0.0 + 0.0j

    norm2 = norm * norm
    r_star = r / norm
    phase = np.exp(-1j * (x[0] * data.location[0] + x[1] * data.location[1]))
    sa = data.s * data.alpha
    if sa > 0:
        osc = np.exp(-1j * np.pi / 4.0) / np.sqrt(sa)
    else:
        osc = np.exp(1j * np.pi / 4.0) / np.sqrt(-sa)
    return (
        2.0 * np.pi * data.amplitude * phase * np.sqrt(np.pi)
        * np.exp(-1j * data.s * data.mu * np.pi / 2.0)
        / (norm2 * _gamma(data.mu))
        * r_star ** (data.mu - 1.5)
        * osc
    )


def crossing_contribution(data: CrossingData, x, additive: bool = False) -> complex:
    """Leading far-field term of an active transverse crossing.

        4 pi^2 A e^(-i x.xi*) e^(-i pi (s1 mu1 + s2 mu2)/2)
        / (Gamma(mu1) Gamma(mu2) delta^(mu1+mu2-1))
        * |x1 b2 - x2 a2|^(mu1-1) * |-x1 b1 + x2 a1|^(mu2-1)

    gated on sign(x1~ b2 - x2~ a2) = s1 and sign(-x1~ b1 + x2~ a1) = s2;
    a failed gate returns 0.  A direction inside the dead zone of either
    sign raises :class:`BoundaryDirectionError` (the crossing degenerates
    into a perpendicular point of one curve).  An additively splitting
    crossing returns 0 regardless of the gates.
    """
    for mu in (data.mu1, data.mu2):
        if mu <= 0 and mu == int(mu):
            raise NonSingularExponentError(
                f"exponent {mu} is a non-positive integer; not contributing"
            )
    if data.delta <= 0:
        raise ValueError("crossing data must be in determinant-positive order")
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    xt = x / r
    e1 = xt[0] * data.b2 - xt[1] * data.a2
    e2 = -xt[0] * data.b1 + xt[1] * data.a1
    if abs(e1) <= 1e-12 * np.hypot(data.a2, data.b2) or \
       abs(e2) <= 1e-12 * np.hypot(data.a1, data.b1):
        raise BoundaryDirectionError(
            f"direction {tuple(xt)} lies on an activity boundary of the "
            f"crossing at {data.location}"
        )
    if additive:
        warnings.warn("additive crossing: active but non-contributing")
        return 0.0 + 0.0j
    if np.sign(e1) != data.s1 or np.sign(e2) != data.s2:
        return 0.0 + 0.0j

    u1 = abs(x[0] * data.b2 - x[1] * data.a2)
    u2 = abs(-x[0] * data.b1 + x[1] * data.a1)
    phase = np.exp(-1j * (x[0] * data.location[0] + x[1] * data.location[1]))
    return (
        4.0 * np.pi**2 * data.amplitude * phase
        * np.exp(-1j * np.pi * (data.s1 * data.mu1 + data.s2 * data.mu2) / 2.0)
        / (_gamma(data.mu1) * _gamma(data.mu2) * data.delta ** (data.mu1 + data.mu2 - 1.0))
        * u1 ** (data.mu1 - 1.0) * u2 ** (data.mu2 - 1.0)
    )


def saddle2d_estimate(f_value: complex, hessian, phase_value: complex, lam: float) -> complex:
    """Leading term of a plain two-dimensional stationary-phase integral.

    For integral F(xi) exp(lam * G(xi)) d(xi) with an interior stationary
    point xi0 of purely oscillatory G (G = i * phi, phi real) and H the
    real symmetric Hessian of phi at xi0:

        a0 / lam * exp(lam * G(xi0)),
        a0 = 2 pi F(xi0) e^(i pi delta / 2) / sqrt(|det H|),

    where delta is +1, 0 or -1 as both eigenvalues of H are positive,
    mixed, or both negative.  ``phase_value`` is G(xi0).
    """
    H = np.asarray(hessian, dtype=float)
    det = float(np.linalg.det(H))
    if abs(det) < 1e-300:
        raise ValueError("degenerate Hessian")
    evals = np.linalg.eigvalsh(H)
    delta = (int(np.sign(evals[0])) + int(np.sign(evals[1]))) // 2
    a0 = 2.0 * np.pi * f_value * np.exp(1j * np.pi * delta / 2.0) / np.sqrt(abs(det))
    return a0 / lam * np.exp(lam * complex(phase_value))


# ---------------------------------------------------------------------------
# amplitude/exponent extraction and assembly
# ---------------------------------------------------------------------------

def local_data_at(
    model: WaveFunctionModel,
    point: SpecialPoint,
    bridges: BridgeConfig,
) -> list:
    """Exact local data (A, mu) at a classified contributing point.

    The amplitude of each singular term is its amplitude expression times
    every remaining factor evaluated at the point on the branch fixed by
    the bypass signs.  Terms sharing the same exponent signature add up;
    distinct signatures give separate entries, each its own leading term.
    """
    x0, y0 = point.location
    comp_map = model.component_map

    def remaining(term, skip_ids):
        value = complex(term.amplitude.evaluate(x0, y0, 0.0))
        for cid, mu in term.factors:
            if cid in skip_ids or mu == 0.0:
                continue
            w = complex(comp_map[cid].value(x0, y0, 0.0))
            if abs(w) <= 1e-10:
                raise UnsupportedConfigurationError(
                    f"special point {point.location} lies on the additional "
                    f"curve {cid!r}; coincident special points are not handled"
                )
            value *= complex(branch_power(w, mu, bridges.sign(cid)))
        return value

    if point.kind == "sos":
        cid = point.components[0]
        comp = comp_map[cid]
        fr = frame_at(comp, point.location)
        alpha = alpha_at(comp, point.location)
        s = bridges.sign(cid)
        groups: dict[float, complex] = {}
        for term in model.terms:
            mu = term.exponent(cid)
            if mu <= 0.0:
                continue
            groups[mu] = groups.get(mu, 0.0) + remaining(term, {cid})
        return [
            SosData(location=point.location, amplitude=ampl, mu=mu,
                    alpha=alpha, s=s, a=fr.a, b=fr.b)
            for mu, ampl in sorted(groups.items())
        ]

    if point.kind == "crossing":
        cid1, cid2 = point.components
        c1, c2 = comp_map[cid1], comp_map[cid2]
        a1, b1 = _real_grad(c1, point.location)
        a2, b2 = _real_grad(c2, point.location)
        delta = a1 * b2 - a2 * b1
        groups: dict[tuple[float, float], complex] = {}
        for term in model.terms:
            mu1, mu2 = term.exponent(cid1), term.exponent(cid2)
            if mu1 <= 0.0 or mu2 <= 0.0:
                continue
            key = (mu1, mu2)
            groups[key] = groups.get(key, 0.0) + remaining(term, {cid1, cid2})
        return [
            CrossingData(location=point.location, amplitude=ampl,
                         mu1=k[0], mu2=k[1], delta=delta,
                         s1=bridges.sign(cid1), s2=bridges.sign(cid2),
                         a1=a1, b1=b1, a2=a2, b2=b2)
            for k, ampl in sorted(groups.items())
        ]

    raise UnsupportedConfigurationError(
        f"no closed-form contribution for a {point.kind} point"
    )


def _real_grad(component, point):
    a, b = component.grad(point[0], point[1], 0.0)
    return complex(a).real, complex(b).real


@dataclass(frozen=True)
class Contribution:
    """One algebraic far-field term attached to a contributing point.

    ``evaluate(x)`` returns the complex term at x = r * x_dir;
    |evaluate| scales exactly like r**r_power.  ``amplitude(x_dir)``
    strips the carrier phase: evaluate(r x~) = amplitude * r^r_power *
    exp(-i r x~ . xi*).
    """

    source: SpecialPoint
    data: SosData | CrossingData
    r_power: float

    @property
    def phase_point(self) -> tuple[float, float]:
        return self.source.location

    def evaluate(self, x) -> complex:
        if isinstance(self.data, SosData):
            return sos_contribution(self.data, x)
        return crossing_contribution(self.data, x)

    def amplitude(self, x_dir) -> complex:
        xt = np.asarray(x_dir, dtype=float)
        xt = xt / np.linalg.norm(xt)
        val = self.evaluate(xt)
        phase = np.exp(1j * (xt[0] * self.phase_point[0] + xt[1] * self.phase_point[1]))
        return complex(val * phase)


def assemble_far_field(
    model: WaveFunctionModel,
    bridges: BridgeConfig,
    x_dir,
    window: tuple[float, float, float, float],
    cell_size: float | None = None,
    traces: dict[str, RealTrace] | None = None,
    points: list[SpecialPoint] | None = None,
) -> tuple[list[Contribution], list[SpecialPoint]]:
    """Locate, classify and evaluate every contributing point in a window.

    Runs the full geometric pipeline (curve tracing, perpendicular-point
    and crossing searches, activity classification, additive-splitting
    test) and returns the list of far-field contributions together with
    the classified special points.  The total leading-order far field at
    x = r * x_dir is the sum of ``c.evaluate(x)`` over the contributions.

    Raises :class:`BoundaryDirectionError` when the direction sits on an
    activity boundary of some crossing (the offending point is named).
    """
    xt = np.asarray(x_dir, dtype=float)
    xt = xt / np.linalg.norm(xt)
    if cell_size is None:
        cell_size = min(window[1] - window[0], window[3] - window[2]) / 300.0
    comp_map = model.component_map

    if traces is None:
        traces = {c.id: trace_real_curves(c, window, cell_size) for c in model.components}

    if points is None:
        points = []
        for comp in model.components:
            for p in find_sos_points(comp, xt, traces[comp.id]):
                points.append(SpecialPoint(
                    location=(float(p[0]), float(p[1])),
                    kind="sos", components=(comp.id,),
                    alpha=alpha_at(comp, p),
                ))
        comps = list(model.components)
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                points.extend(find_crossings(
                    comps[i], comps[j], window, cell_size,
                    traces=(traces[comps[i].id], traces[comps[j].id]),
                ))
        # a perpendicular point that coincides with a crossing is outside
        # the closed forms
        for p in points:
            if p.kind != "sos":
                continue
            for q in points:
                if q.kind == "crossing" and _close(p.location, q.location):
                    raise UnsupportedConfigurationError(
                        f"perpendicular point {p.location} coincides with the "
                        f"crossing {q.location}; this degenerate case is not handled"
                    )

    classified = []
    for p in points:
        cp = classify_activity(p, xt, bridges, comp_map)
        if cp.kind == "crossing" and cp.activity == "boundary":
            raise BoundaryDirectionError(
                f"direction {tuple(xt)} lies on an activity boundary of the "
                f"crossing at {cp.location}"
            )
        if cp.kind == "crossing" and cp.activity == "active":
            additive = additivity_structural(model, cp)
            cp = replace(
                cp,
                contributing=not additive,
                reason=cp.reason + ("; additive split, discarded" if additive else ""),
            )
        classified.append(cp)
    classified.sort(key=lambda sp: sp.location)

    contributions = []
    for cp in classified:
        if not cp.contributing:
            continue
        for data in local_data_at(model, cp, bridges):
            if isinstance(data, SosData):
                r_power = data.mu - 1.5
            else:
                r_power = data.mu1 + data.mu2 - 2.0
            contributions.append(Contribution(source=cp, data=data, r_power=r_power))
    return contributions, classified


def _close(p, q, tol=1e-8):
    return abs(p[0] - q[0]) <= tol and abs(p[1] - q[1]) <= tol
