"""Scenario files and the end-to-end validation pipeline.

A scenario is a line-oriented text file: ``key = value`` assignments
plus two sections listing the singular components and the integrand
terms.  Example::

    name = example_7_2
    direction = 1.5 0.9
    r_list = 2 4 8 16
    kappa_list = 0.2 0.1 0.05
    grid = 400 400
    margin = 1.0
    rho = 0.3
    beta = 0.05

    [components]
    s1 branch xi1 + i*kappa
    s2 branch xi2 + i*kappa

    [terms]
    1 :: s1^0.5 s2^0.5

Component lines are ``id kind expression``; term lines are
``amplitude_expression :: id^mu id^mu ...``.  The direction is
normalised on load; ``window`` may be given explicitly (four numbers) or
left out, in which case it is auto-sized to the special points plus
``margin``.  Everything the pipeline produces is CSV, so runs diff
cleanly; two runs of the same scenario produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .asymptotics import assemble_far_field
from .bridges import BridgeConfig, bridge_config_for_model
from .classify import SpecialPoint
from .expressions import (
    SingularComponent,
    Term,
    WaveFunctionModel,
    check_real_property,
    parse_expression,
)
from .quadrature import (
    QuadratureConfig,
    integrand_heatmap_csv,
    integrate_on_surface,
    integrate_reference,
)
from .surfaces import FieldParams, build_global_field, verify_field
from .tracing import trace_real_curves

__all__ = [
    "Scenario",
    "loads_scenario",
    "dumps_scenario",
    "load_scenario",
    "save_scenario",
    "builtin_scenario",
    "BUILTIN_SCENARIOS",
    "run_scenario",
    "RunResult",
    "convergence_report",
    "ConvergenceReport",
]


@dataclass(frozen=True)
class Scenario:
    """Declarative description of one validation run."""

    name: str
    components: tuple[tuple[str, str, str], ...]   # (id, kind, expression)
    terms: tuple[tuple[str, tuple[tuple[str, float], ...]], ...]
    direction: tuple[float, float]
    r_values: tuple[float, ...] = ()
    kappa_values: tuple[float, ...] = ()
    window: tuple[float, float, float, float] | None = None
    margin: float = 1.0
    grid: tuple[int, int] = (400, 400)
    cell_size: float | None = None
    rho: float = 0.3
    beta: float = 0.05
    eta_max: float = 0.5

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            raise ValueError("direction must be nonzero")
        if abs(norm - 1.0) > 1e-12:
            object.__setattr__(self, "direction",
                               (float(d[0] / norm), float(d[1] / norm)))
        if any(r <= 0 for r in self.r_values):
            raise ValueError("r values must be positive")

    def build_model(self) -> WaveFunctionModel:
        comps = tuple(
            SingularComponent(id=cid, g=parse_expression(text), kind=kind)
            for cid, kind, text in self.components
        )
        terms = tuple(
            Term(amplitude=parse_expression(amp), factors=factors)
            for amp, factors in self.terms
        )
        return WaveFunctionModel(components=comps, terms=terms)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def dumps_scenario(s: Scenario) -> str:
    out = io.StringIO()
    out.write(f"name = {s.name}\n")
    out.write(f"direction = {repr(s.direction[0])} {repr(s.direction[1])}\n")
    if s.r_values:
        out.write("r_list = " + " ".join(repr(v) for v in s.r_values) + "\n")
    if s.kappa_values:
        out.write("kappa_list = " + " ".join(repr(v) for v in s.kappa_values) + "\n")
    if s.window is not None:
        out.write("window = " + " ".join(repr(v) for v in s.window) + "\n")
    out.write(f"margin = {repr(s.margin)}\n")
    out.write(f"grid = {s.grid[0]} {s.grid[1]}\n")
    if s.cell_size is not None:
        out.write(f"cell_size = {repr(s.cell_size)}\n")
    out.write(f"rho = {repr(s.rho)}\n")
    out.write(f"beta = {repr(s.beta)}\n")
    out.write(f"eta_max = {repr(s.eta_max)}\n")
    out.write("\n[components]\n")
    for cid, kind, text in s.components:
        out.write(f"{cid} {kind} {text}\n")
    out.write("\n[terms]\n")
    for amp, factors in s.terms:
        factorstr = " ".join(f"{cid}^{repr(mu)}" for cid, mu in factors)
        out.write(f"{amp} :: {factorstr}\n")
    return out.getvalue()


def loads_scenario(text: str) -> Scenario:
    kv: dict[str, str] = {}
    components: list[tuple[str, str, str]] = []
    terms: list[tuple[str, tuple[tuple[str, float], ...]]] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("components", "terms"):
                raise ValueError(f"line {lineno}: unknown section {section!r}")
            continue
        if section == "components":
            parts = line.split(None, 2)
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'id kind expression'")
            components.append((parts[0], parts[1], parts[2]))
        elif section == "terms":
            if "::" not in line:
                raise ValueError(f"line {lineno}: expected 'amplitude :: factors'")
            amp, factorstr = (p.strip() for p in line.split("::", 1))
            factors = []
            for tok in factorstr.split():
                if "^" not in tok:
                    raise ValueError(f"line {lineno}: factor {tok!r} needs id^mu")
                cid, mu = tok.rsplit("^", 1)
                factors.append((cid, float(mu)))
            terms.append((amp, tuple(factors)))
        else:
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected 'key = value'")
            key, val = (p.strip() for p in line.split("=", 1))
            kv[key] = val

    def floats(key, default=()):
        if key not in kv:
            return tuple(default)
        return tuple(float(v) for v in kv[key].split())

    if "name" not in kv:
        raise ValueError("scenario needs a name")
    if "direction" not in kv:
        raise ValueError("scenario needs a direction")
    d = floats("direction")
    window = floats("window") if "window" in kv else None
    if window is not None and len(window) != 4:
        raise ValueError("window needs four numbers: x0 x1 y0 y1")
    grid = tuple(int(v) for v in kv.get("grid", "400 400").split())
    if len(grid) == 1:
        grid = (grid[0], grid[0])
    return Scenario(
        name=kv["name"],
        components=tuple(components),
        terms=tuple(terms),
        direction=(d[0], d[1]),
        r_values=floats("r_list"),
        kappa_values=floats("kappa_list"),
        window=window,
        margin=float(kv.get("margin", "1.0")),
        grid=(grid[0], grid[1]),
        cell_size=float(kv["cell_size"]) if "cell_size" in kv else None,
        rho=float(kv.get("rho", "0.3")),
        beta=float(kv.get("beta", "0.05")),
        eta_max=float(kv.get("eta_max", "0.5")),
    )


def load_scenario(path_or_name: str) -> Scenario:
    """Load a scenario from a file path or by built-in name."""
    if path_or_name in BUILTIN_SCENARIOS:
        return builtin_scenario(path_or_name)
    with open(path_or_name) as fh:
        return loads_scenario(fh.read())


def save_scenario(s: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_scenario(s))


# ---------------------------------------------------------------------------
# built-in scenarios
# ---------------------------------------------------------------------------

_EXAMPLE_TRIPLE_LINES = """\
name = example_7_2
direction = 1.5 0.9
r_list = 2.0 4.0 8.0 16.0
kappa_list = 0.2 0.1 0.05
margin = 1.0
grid = 400 400
rho = 0.3
beta = 0.05

[components]
s1 branch xi1 + i*kappa
s2 branch xi2 + i*kappa
s3 branch xi1 + xi2 - 1 + i*kappa

[terms]
1 :: s1^0.5 s2^0.5 s3^0.5
"""

_EXAMPLE_PARABOLA = """\
name = example_7_5
direction = 1.0 2.0
r_list = 2.0 4.0 8.0 16.0
kappa_list = 0.2 0.1 0.05
margin = 1.0
grid = 400 400
rho = 0.3
beta = 0.05

[components]
s1 branch xi2 - 2 + i*kappa
s2 branch xi2 - xi1^2 + i*kappa

[terms]
1 :: s1^0.5 s2^0.5
"""

_EXAMPLE_CIRCLE = """\
name = traces_only_circle
direction = 1.0 1.0
margin = 1.0
grid = 200 200
window = -2.0 2.0 -2.0 2.0

[components]
c pole 1 - xi1^2 - xi2^2 + 2*i*kappa - kappa^2

[terms]
1 :: c^1
"""

BUILTIN_SCENARIOS = {
    "example_7_2": _EXAMPLE_TRIPLE_LINES,
    "example_7_5": _EXAMPLE_PARABOLA,
    "traces_only_circle": _EXAMPLE_CIRCLE,
}


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN_SCENARIOS:
        raise KeyError(
            f"unknown built-in scenario {name!r}; available: "
            + ", ".join(sorted(BUILTIN_SCENARIOS))
        )
    return loads_scenario(BUILTIN_SCENARIOS[name])


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    """Artifacts and summary numbers of one scenario run."""

    scenario: Scenario
    out_dir: str
    window: tuple[float, float, float, float]
    bridges: BridgeConfig
    points: list[SpecialPoint]
    contributions: list
    comparison: list  # rows (r, numeric, asymptotic)
    surface_report: object | None = None
    convergence: "ConvergenceReport | None" = None
    artifacts: dict = field(default_factory=dict)


def _auto_window(points, traces, margin):
    xs, ys = [], []
    for p in points:
        xs.append(p.location[0])
        ys.append(p.location[1])
    if not xs:
        for tr in traces.values():
            for pl in tr.polylines:
                xs.extend([pl[:, 0].min(), pl[:, 0].max()])
                ys.extend([pl[:, 1].min(), pl[:, 1].max()])
    if not xs:
        xs, ys = [0.0], [0.0]
    return (min(xs) - margin, max(xs) + margin, min(ys) - margin, max(ys) + margin)


def run_scenario(
    scenario: Scenario | str,
    out_dir: str,
    grid: tuple[int, int] | None = None,
    r_values: tuple[float, ...] | None = None,
    kappa_values: tuple[float, ...] | None = None,
) -> RunResult:
    """Execute the whole pipeline for a scenario and emit CSV artifacts.

    Steps: parse and validate the model, trace the singular curves,
    determine bypass signs, classify special points, evaluate the
    closed-form expansion, build and verify the deformed surface,
    integrate numerically for every requested r, and fit the convergence
    slope of the discrepancy.  Artifacts (trace/bridge/classification/
    expansion/field/decay/comparison CSVs) are written under ``out_dir``.
    """
    if isinstance(scenario, str):
        scenario = load_scenario(scenario)
    if grid is not None:
        scenario = replace(scenario, grid=tuple(grid))
    if r_values is not None:
        scenario = replace(scenario, r_values=tuple(r_values))
    if kappa_values is not None:
        scenario = replace(scenario, kappa_values=tuple(kappa_values))

    os.makedirs(out_dir, exist_ok=True)
    artifacts: dict[str, str] = {}
    model = scenario.build_model()
    xt = np.asarray(scenario.direction)

    # validate the real-curve structure before anything else
    probe_window = scenario.window or (-3.0, 3.0, -3.0, 3.0)
    for comp in model.components:
        report = check_real_property(comp, probe_window)
        if not report.passed:
            raise ValueError(
                f"component {comp.id!r} violates the real-curve requirements: "
                f"worst {report.worst}"
            )

    # first pass in a generous window to locate the geometry
    scan_window = scenario.window or probe_window
    cell = scenario.cell_size or min(
        scan_window[1] - scan_window[0], scan_window[3] - scan_window[2]) / 300.0
    traces = {c.id: trace_real_curves(c, scan_window, cell) for c in model.components}
    bridges = bridge_config_for_model(model, scan_window, traces=traces)

    contributions, points = assemble_far_field(
        model, bridges, xt, scan_window, cell_size=cell, traces=traces)

    window = scenario.window or _auto_window(points, traces, scenario.margin)
    if scenario.window is None:
        # re-run geometry in the final window
        cell = scenario.cell_size or min(
            window[1] - window[0], window[3] - window[2]) / 300.0
        traces = {c.id: trace_real_curves(c, window, cell) for c in model.components}
        contributions, points = assemble_far_field(
            model, bridges, xt, window, cell_size=cell, traces=traces)

    for cid, tr in traces.items():
        path = os.path.join(out_dir, f"trace_{cid}.csv")
        tr.to_csv(path)
        artifacts[f"trace_{cid}"] = path

    path = os.path.join(out_dir, "bridges.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "s"])
        for cid in sorted(bridges.signs):
            w.writerow([cid, f"{bridges.signs[cid]:+d}"])
    artifacts["bridges"] = path

    path = os.path.join(out_dir, "classification.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "kind", "delta_or_alpha", "s1", "s2",
                    "activity", "contributing", "reason"])
        for p in points:
            da = p.alpha if p.kind == "sos" else p.delta
            w.writerow([
                repr(p.location[0]), repr(p.location[1]), p.kind,
                repr(float(da)) if da is not None else "",
                f"{p.signs[0]:+d}" if len(p.signs) > 0 else "",
                f"{p.signs[1]:+d}" if len(p.signs) > 1 else "",
                p.activity or "", p.contributing, p.reason,
            ])
    artifacts["classification"] = path

    path = os.path.join(out_dir, "expansion.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "kind", "r_power", "re_c", "im_c",
                    "phase_x", "phase_y"])
        for c in contributions:
            amp = c.amplitude(xt)
            w.writerow([
                repr(c.source.location[0]), repr(c.source.location[1]),
                c.source.kind, repr(c.r_power),
                repr(amp.real), repr(amp.imag),
                repr(c.phase_point[0]), repr(c.phase_point[1]),
            ])
    artifacts["expansion"] = path

    result = RunResult(
        scenario=scenario, out_dir=out_dir, window=window, bridges=bridges,
        points=points, contributions=contributions, comparison=[],
        artifacts=artifacts,
    )

    if not scenario.r_values:
        return result

    params = FieldParams(rho=scenario.rho, beta=scenario.beta,
                         eta_max=scenario.eta_max)
    field_obj = build_global_field(
        model, bridges, xt, points, window, grid=scenario.grid, params=params)
    surface_report = verify_field(field_obj, model)
    result.surface_report = surface_report
    path = os.path.join(out_dir, "field.csv")
    field_obj.to_csv(path)
    artifacts["field"] = path
    path = os.path.join(out_dir, "decay.csv")
    field_obj.decay_to_csv(path)
    artifacts["decay"] = path
    path = os.path.join(out_dir, "surface_report.txt")
    with open(path, "w") as fh:
        fh.write(surface_report.summary() + "\n")
    artifacts["surface_report"] = path
    if not surface_report.passed:
        raise RuntimeError(
            "deformed surface failed verification:\n" + surface_report.summary())

    path = os.path.join(out_dir, "integrand.csv")
    integrand_heatmap_csv(model, field_obj, float(scenario.r_values[0]) * xt, path)
    artifacts["integrand"] = path

    rows = []
    for r in scenario.r_values:
        xvec = float(r) * xt
        numeric = integrate_on_surface(model, field_obj, xvec, check_field=False)
        asym = sum((c.evaluate(xvec) for c in contributions), 0.0 + 0.0j)
        rows.append((float(r), numeric, asym))
    result.comparison = rows

    path = os.path.join(out_dir, "comparison.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "re_num", "im_num", "re_asym", "im_asym",
                    "abs_diff", "rel_diff"])
        for r, numeric, asym in rows:
            diff = abs(numeric - asym)
            rel = diff / abs(asym) if asym != 0 else float("inf")
            w.writerow([repr(r), repr(numeric.real), repr(numeric.imag),
                        repr(asym.real), repr(asym.imag), repr(diff), repr(rel)])
    artifacts["comparison"] = path

    if scenario.kappa_values:
        path = os.path.join(out_dir, "reference.csv")
        r0 = float(scenario.r_values[0])
        xvec = r0 * xt
        cfg = QuadratureConfig.from_bridges(scenario.grid, window, bridges)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kappa", "r", "re", "im"])
            for kap in scenario.kappa_values:
                val = integrate_reference(model, float(kap), xvec, cfg)
                w.writerow([repr(float(kap)), repr(r0), repr(val.real), repr(val.imag)])
            deformed = integrate_on_surface(model, field_obj, xvec, check_field=False)
            w.writerow([repr(0.0), repr(r0), repr(deformed.real), repr(deformed.imag)])
        artifacts["reference"] = path

    if len(rows) >= 4:
        result.convergence = convergence_report(
            [(r, abs(numeric - asym)) for r, numeric, asym in rows])

    return result


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceReport:
    """Least-squares slope of log|discrepancy| against log r."""

    slope: float
    intercept: float
    residual: float
    slope_window: tuple[float, float]

    @property
    def passed(self) -> bool:
        lo, hi = self.slope_window
        return lo <= self.slope <= hi


def convergence_report(data, slope_window=(-2.6, -1.4)) -> ConvergenceReport:
    """Fit log|d| = slope * log r + intercept.

    ``data`` is a comparison CSV path or (r, |difference|) pairs; at
    least four r values spanning a factor of four are required.
    """
    if isinstance(data, (str, os.PathLike)):
        rows = []
        with open(data) as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append((float(rec["r"]), float(rec["abs_diff"])))
        data = rows
    data = sorted(data)
    if len(data) < 4:
        raise ValueError("need at least four r values")
    rs = np.array([r for r, _ in data])
    ds = np.array([d for _, d in data])
    if rs.max() / rs.min() < 4.0:
        raise ValueError("r values must span at least a factor of four")
    if np.any(ds <= 0):
        raise ValueError("discrepancies must be positive for the log fit")
    A = np.column_stack([np.log(rs), np.ones_like(rs)])
    coef, res, *_ = np.linalg.lstsq(A, np.log(ds), rcond=None)
    residual = float(np.sqrt(res[0] / len(rs))) if len(res) else 0.0
    return ConvergenceReport(
        slope=float(coef[0]), intercept=float(coef[1]),
        residual=residual, slope_window=tuple(slope_window),
    )
