"""Bypass configuration: which side of each singular curve the
integration surface passes on.

The physically admissible surface is the limit of the flat real plane as
the regularising parameter kappa shrinks to zero, so for each component
the surface must dodge the zero curve on one definite side.  We store
that choice canonically as a sign s per component:

    s = +1  <=>  the surface bypasses the curve from above in the unit
                 normal direction n = grad g / |grad g|
                 (equivalently sign(eta . n) = +1 on the curve),

removing any arbitrary left/right convention.  All other orientations
are derived from s via :func:`bypass_side`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousBridgeError, DegenerateGradientError, TangentDirectionError
from .expressions import SingularComponent, WaveFunctionModel
from .tracing import RealTrace, frame_at, trace_real_curves

__all__ = ["BridgeConfig", "determine_bridge", "bypass_side", "bridge_config_for_model"]

_PURE_IMAG_RTOL = 1e-9
_NULL_IMAG_RTOL = 1e-13
_COORD_SWAP_FACTOR = 0.1


def determine_bridge(component: SingularComponent, point) -> int:
    """Bypass sign of a component at a point of its real zero curve.

    Tracks the singular root of ``g(. , xi2; kappa) = 0`` near the point
    as kappa decreases to zero: to first order the root sits at

        xi1_root ~ xi1 - (kappa / a) * dg/dkappa,

    whose imaginary sign tells from which side it lands on the real axis;
    the surface must dodge to the opposite side.  When |a| is small
    relative to |b| the same procedure runs in the xi2 coordinate.  The
    result is translated to the normal-direction convention (+1 = above
    along +n).

    Raises :class:`AmbiguousBridgeError` when dg/dkappa has no imaginary
    part (the limit gives no indentation rule) and
    :class:`DegenerateGradientError` when the gradient collapses.
    """
    fr = frame_at(component, point)
    dk = complex(component.dkappa(point[0], point[1], 0.0))
    scale = 1.0 + abs(dk)
    if abs(dk.real) > _PURE_IMAG_RTOL * scale:
        raise ValueError(
            f"dg/dkappa of {component.id!r} is not purely imaginary at "
            f"{tuple(point)}: {dk!r}"
        )
    if abs(dk.imag) <= _NULL_IMAG_RTOL * scale:
        raise AmbiguousBridgeError(
            f"dg/dkappa of {component.id!r} vanishes at {tuple(point)}; the "
            "limiting process gives no bypass rule"
        )

    a, b = fr.a, fr.b
    if abs(a) >= _COORD_SWAP_FACTOR * abs(b):
        coord_grad = a
    else:
        if abs(b) <= 1e-12:
            raise DegenerateGradientError(
                f"both partials of {component.id!r} are negligible at {tuple(point)}"
            )
        coord_grad = b
    # root displacement along the chosen coordinate for small kappa > 0
    root_imag = -dk.imag / coord_grad
    if root_imag > 0:
        # root approaches the real axis from above: bypass below in that
        # coordinate direction
        s = -int(np.sign(coord_grad))
    else:
        s = int(np.sign(coord_grad))
    return s


def bypass_side(s: int, e_z, n) -> str:
    """Translate the canonical sign into above/below along a direction.

    ``e_z`` is the transverse probe direction, ``n`` the unit normal of
    the curve.  Returns "above" iff sign(e_z . n) * s = +1.  A direction
    tangent to the curve (|e_z . n| <= 1e-12 after normalisation) has no
    above/below meaning and raises :class:`TangentDirectionError`.
    """
    e = np.asarray(e_z, dtype=float)
    e = e / np.linalg.norm(e)
    dot = float(np.dot(e, np.asarray(n, dtype=float)))
    if abs(dot) <= 1e-12:
        raise TangentDirectionError(
            "probe direction is tangent to the curve; bypass side undefined"
        )
    return "above" if np.sign(dot) * s > 0 else "below"


@dataclass(frozen=True)
class BridgeConfig:
    """Map component id -> bypass sign (+1 above / -1 below along +n)."""

    signs: dict = field(default_factory=dict)

    def sign(self, component_id: str) -> int:
        return self.signs[component_id]

    def __contains__(self, component_id: str) -> bool:
        return component_id in self.signs

    def items(self):
        return self.signs.items()


def bridge_config_for_model(
    model: WaveFunctionModel,
    window: tuple[float, float, float, float],
    traces: dict[str, RealTrace] | None = None,
    cell_size: float | None = None,
) -> BridgeConfig:
    """Determine the bypass sign of every component of a model.

    Uses one point of the traced curve per component (the sign is constant
    along a connected curve).  Components without a real trace anywhere
    get the neutral sign +1: their factor never vanishes on the real
    plane, so no branch cut is ever approached.
    """
    if cell_size is None:
        cell_size = max(window[1] - window[0], window[3] - window[2]) / 200.0
    signs = {}
    for comp in model.components:
        trace = traces.get(comp.id) if traces else None
        if trace is None:
            trace = trace_real_curves(comp, window, cell_size)
        point = None
        if trace.polylines:
            point = trace.polylines[0][0]
        else:
            point = _find_zero_anywhere(comp, window)
        signs[comp.id] = determine_bridge(comp, point) if point is not None else 1
    return BridgeConfig(signs=signs)


def _find_zero_anywhere(component, window, tries: int = 64):
    """Newton search for any real zero, also outside the window."""
    x0, x1, y0, y1 = window
    rng = np.random.default_rng(7)
    scale = 4.0 * max(x1 - x0, y1 - y0)
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    px = cx + rng.uniform(-scale, scale, tries)
    py = cy + rng.uniform(-scale, scale, tries)
    for _ in range(80):
        val = np.asarray(component.value(px, py, 0.0), dtype=complex).real
        a, b = component.grad(px, py, 0.0)
        a = np.asarray(a, dtype=complex).real
        b = np.asarray(b, dtype=complex).real
        norm2 = a * a + b * b
        norm2 = np.where(norm2 < 1e-30, 1.0, norm2)
        px = px - np.clip(val / norm2, -10, 10) * a
        py = py - np.clip(val / norm2, -10, 10) * b
    val = np.abs(np.asarray(component.value(px, py, 0.0), dtype=complex))
    k = int(np.argmin(val))
    if val[k] <= 1e-10:
        return np.array([px[k], py[k]])
    return None
