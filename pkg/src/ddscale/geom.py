"""Double-delta wing geometry: airfoil morphing, planform closure and twist."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize
from scipy.special import comb

PIVOT_XC = 0.30
BEZIER_DEGREE = 4
GRID_SIZE = 101
TWIST_ROOT_DEG = 1.5
TWIST_TIP_DEG = -1.5
AR_REF = 2.5


class GeometryError(ValueError):
    """Invalid or infeasible geometry input."""


class MorphConvergenceError(RuntimeError):
    def __init__(self, message, best_residual):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


# --------------------------------------------------------------------------
# Design vector
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignVector:
    droop_deg: float
    sweep_in_deg: float
    sweep_out_deg: float
    sweep_te_deg: float
    break_fraction: float
    span: float

    def __post_init__(self):
        if not 0.0 < self.break_fraction < 1.0:
            raise GeometryError(f"break_fraction must be in (0, 1), got {self.break_fraction}")
        if not self.span > 0.0:
            raise GeometryError(f"span must be positive, got {self.span}")

    @classmethod
    def from_array(cls, x) -> DesignVector:
        return cls(*(float(v) for v in x))

    @classmethod
    def nominal(cls) -> DesignVector:
        return cls(0.0, 65.0, 45.0, 10.0, 0.4, 1200.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.droop_deg, self.sweep_in_deg, self.sweep_out_deg,
                         self.sweep_te_deg, self.break_fraction, self.span])

    def validate(self, space) -> DesignVector:
        x = self.as_array()
        for name, v, lo, hi in zip(space.names, x, space.lower, space.upper):
            if not lo <= v <= hi:
                raise GeometryError(f"{name}={v} outside [{lo}, {hi}]")
        return self


# --------------------------------------------------------------------------
# Airfoil sections
# --------------------------------------------------------------------------

@dataclass
class AirfoilCoordinates:
    """Chord-normalised upper and lower surfaces, each an (n, 2) array of (x/c, z/c)."""

    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        self.upper = np.asarray(self.upper, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        for name, surf in (("upper", self.upper), ("lower", self.lower)):
            if surf.ndim != 2 or surf.shape[1] != 2:
                raise GeometryError(f"{name} surface must be an (n, 2) array")
            if len(surf) < 4:
                raise GeometryError(f"{name} surface has {len(surf)} points; need at least 4")
            x = surf[:, 0]
            if np.any(np.diff(x) <= 0):
                raise GeometryError(f"{name} surface x/c must be strictly ascending")
            if not (math.isclose(x[0], 0.0, abs_tol=1e-12) and math.isclose(x[-1], 1.0, abs_tol=1e-12)):
                raise GeometryError(f"{name} surface must run from x/c=0 to x/c=1")


@dataclass
class CamberThickness:
    grid: np.ndarray
    camber: np.ndarray
    thickness: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.camber = np.asarray(self.camber, dtype=float)
        self.thickness = np.asarray(self.thickness, dtype=float)
        if not (self.grid.shape == self.camber.shape == self.thickness.shape):
            raise GeometryError("grid, camber and thickness must share one shape")

    def camber_spline(self) -> CubicSpline:
        return CubicSpline(self.grid, self.camber)


def cosine_grid(n: int = GRID_SIZE) -> np.ndarray:
    g = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, n)))
    g[0], g[-1] = 0.0, 1.0
    return g


def flat_plate(n: int = 21) -> AirfoilCoordinates:
    x = cosine_grid(n)
    surf = np.column_stack([x, np.zeros_like(x)])
    return AirfoilCoordinates(surf, surf.copy())


def analytic_airfoil(max_camber: float = 0.02, thickness: float = 0.06, n: int = 81) -> AirfoilCoordinates:
    """Stand-in baseline section: parabolic camber plus NACA 4-digit thickness.

    Thickness is added vertically so that decomposition recovers both parts
    exactly on the sample points.
    """
    x = cosine_grid(n)
    camber = 4.0 * max_camber * x * (1.0 - x)
    half = 5.0 * thickness * (0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x**2
                              + 0.2843 * x**3 - 0.1036 * x**4)
    half[-1] = 0.0
    return AirfoilCoordinates(np.column_stack([x, camber + half]), np.column_stack([x, camber - half]))


def read_selig(path) -> AirfoilCoordinates:
    """Read a Selig-style file (TE -> upper -> LE -> lower -> TE), optional name line."""
    rows = []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            continue
    pts = np.array(rows)
    le = int(np.argmin(pts[:, 0]))
    upper = pts[: le + 1][::-1]
    lower = pts[le:]
    return AirfoilCoordinates(upper, lower)


def read_surfaces(upper_path, lower_path) -> AirfoilCoordinates:
    return AirfoilCoordinates(np.loadtxt(upper_path, ndmin=2), np.loadtxt(lower_path, ndmin=2))


def decompose_airfoil(coords: AirfoilCoordinates, grid_size: int = GRID_SIZE) -> CamberThickness:
    """Camber and thickness on a shared cosine grid via cubic-spline surfaces."""
    if grid_size < 20:
        raise GeometryError("grid_size must be >= 20")
    grid = cosine_grid(grid_size)
    zu = CubicSpline(coords.upper[:, 0], coords.upper[:, 1])(grid)
    zl = CubicSpline(coords.lower[:, 0], coords.lower[:, 1])(grid)
    return CamberThickness(grid, 0.5 * (zu + zl), zu - zl)


def smooth(z: np.ndarray, passes: int = 1) -> np.ndarray:
    """Three-point moving average with pinned endpoints."""
    z = np.array(z, dtype=float)
    for _ in range(passes):
        z[1:-1] = (z[:-2] + z[1:-1] + z[2:]) / 3.0
    return z


def reconstruct_airfoil(ct: CamberThickness, smoothing_passes: int = 1) -> AirfoilCoordinates:
    if np.any(ct.thickness < 0):
        raise GeometryError("negative thickness")
    zu = smooth(ct.camber + 0.5 * ct.thickness, smoothing_passes)
    zl = smooth(ct.camber - 0.5 * ct.thickness, smoothing_passes)
    return AirfoilCoordinates(np.column_stack([ct.grid, zu]), np.column_stack([ct.grid, zl]))


# --------------------------------------------------------------------------
# Droop morphing
# --------------------------------------------------------------------------

def bernstein(degree: int, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)[..., None]
    k = np.arange(degree + 1)
    return comb(degree, k) * t**k * (1.0 - t) ** (degree - k)


@dataclass
class BezierSegment:
    """Bezier curve with evenly spaced x control points, so z is a polynomial in x."""

    x0: float
    x1: float
    z: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.z) - 1

    @property
    def control_points(self) -> np.ndarray:
        return np.column_stack([np.linspace(self.x0, self.x1, len(self.z)), self.z])

    def __call__(self, x):
        t = (np.asarray(x, dtype=float) - self.x0) / (self.x1 - self.x0)
        return bernstein(self.degree, t) @ self.z

    def derivatives_at_end(self, end: str) -> tuple[float, float]:
        """dz/dx and d2z/dx2 at the start ('start') or end ('end') of the segment."""
        n, h, z = self.degree, self.x1 - self.x0, self.z
        if end == "start":
            d1 = n * (z[1] - z[0]) / h
            d2 = n * (n - 1) * (z[2] - 2 * z[1] + z[0]) / h**2
        else:
            d1 = n * (z[-1] - z[-2]) / h
            d2 = n * (n - 1) * (z[-1] - 2 * z[-2] + z[-3]) / h**2
        return float(d1), float(d2)


@dataclass
class DroopMorph:
    droop_deg: float
    pivot_xc: float
    leading_curve: BezierSegment
    trailing_curve: BezierSegment
    continuity_residual: float

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.pivot_xc, self.leading_curve(x), self.trailing_curve(x))


def _continuity_gaps(lead: BezierSegment, trail: BezierSegment) -> tuple[float, float]:
    l1, l2 = lead.derivatives_at_end("end")
    t1, t2 = trail.derivatives_at_end("start")
    return l1 - t1, l2 - t2


def _rotated_leading_camber(grid, camber, pivot, z_pivot, droop_deg):
    """Baseline leading camber rotated leading-edge-down about the pivot, resampled on grid."""
    mask = grid <= pivot
    d = math.radians(droop_deg)
    dx, dz = grid[mask] - pivot, camber[mask] - z_pivot
    xr = pivot + dx * math.cos(d) - dz * math.sin(d)
    zr = z_pivot + dx * math.sin(d) + dz * math.cos(d)
    order = np.argsort(xr)
    xr, zr = xr[order], zr[order]
    xs = grid[mask]
    target = np.interp(xs, xr, zr)
    below = xs < xr[0]
    if np.any(below):
        slope = (zr[1] - zr[0]) / (xr[1] - xr[0])
        target[below] = zr[0] + slope * (xs[below] - xr[0])
    return xs, target


def apply_droop(ct: CamberThickness, droop_deg: float, tol: float = 1e-6,
                pivot_xc: float = PIVOT_XC, degree: int = BEZIER_DEGREE,
                max_iter: int = 500) -> tuple[DroopMorph, CamberThickness]:
    """Deflect the leading camber about the pivot and re-join it smoothly.

    The trailing camber is fixed to a least-squares Bezier fit of the
    baseline. The leading curve's control heights are solved with SLSQP:
    least-squares fit to the rotated camber subject to slope and curvature
    matching at the pivot.
    """
    grid = ct.grid
    if not grid[0] < pivot_xc < grid[-1]:
        raise GeometryError("pivot must lie inside the chordwise grid")
    if abs(droop_deg) > 15.0:
        raise GeometryError(f"|droop| must be <= 15 deg, got {droop_deg}")

    z_p = float(ct.camber_spline()(pivot_xc))

    # trailing curve: first control point pinned at the pivot value
    aft = grid >= pivot_xc
    basis_t = bernstein(degree, (grid[aft] - pivot_xc) / (1.0 - pivot_xc))
    rhs = ct.camber[aft] - basis_t[:, 0] * z_p
    tail, *_ = np.linalg.lstsq(basis_t[:, 1:], rhs, rcond=None)
    trailing = BezierSegment(pivot_xc, 1.0, np.concatenate([[z_p], tail]))

    xs, target = _rotated_leading_camber(grid, ct.camber, pivot_xc, z_p, droop_deg)
    basis_l = bernstein(degree, xs / pivot_xc)

    def curve(free):
        return BezierSegment(0.0, pivot_xc, np.concatenate([free, [z_p]]))

    def objective(free):
        r = basis_l[:, :-1] @ free + basis_l[:, -1] * z_p - target
        return float(r @ r)

    def jac(free):
        r = basis_l[:, :-1] @ free + basis_l[:, -1] * z_p - target
        return 2.0 * basis_l[:, :-1].T @ r

    constraints = [
        {"type": "eq", "fun": lambda f: _continuity_gaps(curve(f), trailing)[0]},
        {"type": "eq", "fun": lambda f: _continuity_gaps(curve(f), trailing)[1]},
    ]
    x0, *_ = np.linalg.lstsq(basis_l[:, :-1], target - basis_l[:, -1] * z_p, rcond=None)
    res = minimize(objective, x0, jac=jac, method="SLSQP", constraints=constraints,
                   options={"ftol": 1e-16, "maxiter": max_iter})
    leading = curve(res.x)
    g1, g2 = _continuity_gaps(leading, trailing)
    residual = g1 * g1 + g2 * g2
    if residual > tol:
        raise MorphConvergenceError("droop morph did not reach continuity tolerance", residual)

    if droop_deg == 0.0:
        # identity morph: keep the baseline samples untouched
        morph = DroopMorph(0.0, pivot_xc, leading, trailing, 0.0)
        return morph, CamberThickness(grid.copy(), ct.camber.copy(), ct.thickness.copy())

    morph = DroopMorph(droop_deg, pivot_xc, leading, trailing, residual)
    return morph, CamberThickness(grid.copy(), morph.evaluate(grid), ct.thickness.copy())


# --------------------------------------------------------------------------
# Planform
# --------------------------------------------------------------------------

@dataclass
class WingPlanform:
    root_chord: float
    break_chord: float
    tip_chord: float
    span: float
    break_y: float
    area: float
    aspect_ratio: float
    mac: float
    sweep_in_deg: float
    sweep_out_deg: float
    sweep_te_deg: float

    @property
    def semi_span(self) -> float:
        return 0.5 * self.span

    @property
    def break_x_le(self) -> float:
        return self.break_y * math.tan(math.radians(self.sweep_in_deg))

    @property
    def tip_x_le(self) -> float:
        return self.break_x_le + (self.semi_span - self.break_y) * math.tan(math.radians(self.sweep_out_deg))

    def stations(self) -> list[tuple[float, float, float]]:
        """(y, x_le, chord) at root, break and tip."""
        return [(0.0, 0.0, self.root_chord),
                (self.break_y, self.break_x_le, self.break_chord),
                (self.semi_span, self.tip_x_le, self.tip_chord)]

    def trapezoid_area(self) -> float:
        s = self.semi_span - self.break_y
        return 2.0 * (0.5 * (self.root_chord + self.break_chord) * self.break_y
                      + 0.5 * (self.break_chord + self.tip_chord) * s)


def _trapezoid_mac(a: float, b: float) -> float:
    if a + b == 0.0:
        return 0.0
    return 2.0 / 3.0 * (a + b - a * b / (a + b))


def solve_planform(dv: DesignVector, ar_ref: float = AR_REF) -> WingPlanform:
    """Close the planform by fixing aspect ratio: S = B^2 / ar_ref.

    The inboard trailing edge is unswept, so c_b = c_r - y_b tan(sweep_in)
    and c_t = c_b - (B/2 - y_b)(tan(sweep_out) - tan(sweep_te)); the area
    equation is linear in c_r.
    """
    if ar_ref <= 0:
        raise GeometryError("ar_ref must be positive")
    B = dv.span
    S = B * B / ar_ref
    yb = dv.break_fraction * 0.5 * B
    s = 0.5 * B - yb
    t_in, t_out, t_te = (math.tan(math.radians(a)) for a in (dv.sweep_in_deg, dv.sweep_out_deg, dv.sweep_te_deg))
    # half area = c_r*(yb + s) - yb^2 t_in/2 - s*yb*t_in - s^2 (t_out - t_te)/2
    weight = yb + s
    if weight == 0.0:
        raise GeometryError("degenerate planform closure")
    cr = (0.5 * S + 0.5 * yb * yb * t_in + s * yb * t_in + 0.5 * s * s * (t_out - t_te)) / weight
    cb = cr - yb * t_in
    ct = cb - s * (t_out - t_te)
    a_in = 0.5 * (cr + cb) * yb
    a_out = 0.5 * (cb + ct) * s
    total = a_in + a_out
    mac = (a_in * _trapezoid_mac(cr, cb) + a_out * _trapezoid_mac(cb, ct)) / total if total else 0.0
    return WingPlanform(cr, cb, ct, B, yb, S, ar_ref, mac,
                        dv.sweep_in_deg, dv.sweep_out_deg, dv.sweep_te_deg)


def check_feasibility(dv: DesignVector, ar_ref: float = AR_REF) -> tuple[bool, float]:
    """Feasible iff break and tip chords are non-negative; margin = min(c_t, c_b) / c_r."""
    p = solve_planform(dv, ar_ref)
    margin = min(p.tip_chord, p.break_chord) / p.root_chord
    return (p.tip_chord >= 0.0 and p.break_chord >= 0.0), margin


def clip_tip(planform: WingPlanform) -> WingPlanform:
    """Planform with a negative tip chord replaced by zero (MAC recomputed, S kept)."""
    if planform.tip_chord >= 0.0:
        return planform
    cr, cb = planform.root_chord, planform.break_chord
    a_in = 0.5 * (cr + cb) * planform.break_y
    a_out = 0.5 * cb * (planform.semi_span - planform.break_y)
    mac = (a_in * _trapezoid_mac(cr, cb) + a_out * _trapezoid_mac(cb, 0.0)) / (a_in + a_out)
    return replace(planform, tip_chord=0.0, mac=mac)


def twist_at(y: float, planform: WingPlanform, root_deg: float = TWIST_ROOT_DEG,
             tip_deg: float = TWIST_TIP_DEG) -> float:
    """Constant inboard twist, linear washout from the break to the tip."""
    half = planform.semi_span
    if not -1e-9 * half <= y <= half * (1 + 1e-12):
        raise GeometryError(f"y={y} outside the half-span [0, {half}]")
    if y <= planform.break_y:
        return root_deg
    frac = (y - planform.break_y) / (half - planform.break_y)
    return root_deg + frac * (tip_deg - root_deg)


# --------------------------------------------------------------------------
# Wing assembly
# --------------------------------------------------------------------------

@dataclass
class WingSection:
    y: float
    x_le: float
    chord: float
    twist_deg: float
    airfoil: AirfoilCoordinates


@dataclass
class WingGeometry:
    """Half-wing sections (mirrored about y = 0) plus the shared morphed camber line."""

    planform: WingPlanform
    sections: list[WingSection]
    camber: CamberThickness
    morph: DroopMorph | None = None
    twist_root_deg: float = TWIST_ROOT_DEG
    twist_tip_deg: float = TWIST_TIP_DEG
    design: DesignVector | None = field(default=None, repr=False)

    def _stations(self):
        return self.planform.stations()

    def leading_edge_x(self, y) -> np.ndarray:
        ys, xs, _ = zip(*self._stations())
        return np.interp(np.abs(y), ys, xs)

    def chord(self, y) -> np.ndarray:
        ys, _, cs = zip(*self._stations())
        return np.maximum(np.interp(np.abs(y), ys, cs), 0.0)

    def twist_deg(self, y) -> np.ndarray:
        y = np.atleast_1d(np.abs(np.asarray(y, dtype=float)))
        out = np.array([twist_at(min(v, self.planform.semi_span), self.planform,
                                 self.twist_root_deg, self.twist_tip_deg) for v in y])
        return out

    def camber_at(self, xc) -> np.ndarray:
        return np.interp(xc, self.camber.grid, self.camber.camber)

    def camber_slope_at(self, xc) -> np.ndarray:
        slope = np.gradient(self.camber.camber, self.camber.grid)
        return np.interp(xc, self.camber.grid, slope)


def build_wing(dv: DesignVector, baseline: AirfoilCoordinates | None = None, *,
               ar_ref: float = AR_REF, twist: tuple[float, float] = (TWIST_ROOT_DEG, TWIST_TIP_DEG),
               grid_size: int = GRID_SIZE, smoothing_passes: int = 1,
               extra_stations: int = 0, infeasible: str = "raise") -> WingGeometry:
    """Full geometry for one design: morphed section, planform and twist schedule.

    ``infeasible="clip-tip"`` accepts a negative closed tip chord and pins it
    to zero, leaving a pointed outboard panel; the area closure then no
    longer holds exactly. A negative break chord is always rejected.
    """
    if infeasible not in ("raise", "clip-tip"):
        raise ValueError(f"infeasible must be 'raise' or 'clip-tip', got {infeasible!r}")
    feasible, margin = check_feasibility(dv, ar_ref)
    planform = solve_planform(dv, ar_ref)
    if not feasible:
        if infeasible == "raise" or planform.break_chord < 0.0:
            raise GeometryError(f"infeasible design (margin {margin:.4f}): {dv}")
        planform = clip_tip(planform)
    baseline = baseline if baseline is not None else analytic_airfoil()
    ct = decompose_airfoil(baseline, grid_size)
    morph, morphed = apply_droop(ct, dv.droop_deg)
    section = reconstruct_airfoil(morphed, smoothing_passes)
    root_tw, tip_tw = twist
    ys = [0.0, planform.break_y, planform.semi_span]
    if extra_stations:
        ys = sorted(set(ys) | set(np.linspace(0.0, planform.semi_span, extra_stations + 2)[1:-1].tolist()))
    wing = WingGeometry(planform, [], morphed, morph, root_tw, tip_tw, dv)
    for y in ys:
        wing.sections.append(WingSection(
            float(y), float(wing.leading_edge_x(y)), float(wing.chord(y)),
            twist_at(y, planform, root_tw, tip_tw), section))
    return wing


def flat_camber(grid_size: int = GRID_SIZE) -> CamberThickness:
    grid = cosine_grid(grid_size)
    return CamberThickness(grid, np.zeros_like(grid), np.zeros_like(grid))


def rectangle_planform(span: float, chord: float) -> WingPlanform:
    half = 0.5 * span
    return WingPlanform(chord, chord, chord, span, 0.5 * half, span * chord, span / chord, chord,
                        0.0, 0.0, 0.0)


def delta_planform(span: float, root_chord: float) -> WingPlanform:
    """Straight-trailing-edge delta with the break placed at mid semi-span."""
    half = 0.5 * span
    sweep = math.degrees(math.atan2(root_chord, half))
    area = 0.5 * span * root_chord
    return WingPlanform(root_chord, 0.5 * root_chord, 0.0, span, 0.5 * half, area, span * span / area,
                        2.0 / 3.0 * root_chord, sweep, sweep, 0.0)


def planform_wing(planform: WingPlanform, camber: CamberThickness | None = None,
                  twist: tuple[float, float] = (0.0, 0.0)) -> WingGeometry:
    """Wing over an arbitrary planform; flat and untwisted unless told otherwise."""
    camber = camber if camber is not None else flat_camber()
    section = reconstruct_airfoil(camber, 0)
    wing = WingGeometry(planform, [], camber, None, twist[0], twist[1], None)
    for y in (0.0, planform.break_y, planform.semi_span):
        wing.sections.append(WingSection(float(y), float(wing.leading_edge_x(y)), float(wing.chord(y)),
                                         twist_at(y, planform, *twist), section))
    return wing


def geometry_record(wing: WingGeometry) -> dict:
    p = wing.planform
    return {
        "design": asdict(wing.design) if wing.design else None,
        "planform": asdict(p),
        "sections": [{
            "y": s.y, "x_le": s.x_le, "chord": s.chord, "twist_deg": s.twist_deg,
            "upper": s.airfoil.upper.tolist(), "lower": s.airfoil.lower.tolist(),
        } for s in wing.sections],
        "camber": {"grid": wing.camber.grid.tolist(), "camber": wing.camber.camber.tolist(),
                   "thickness": wing.camber.thickness.tolist()},
        "droop_continuity_residual": wing.morph.continuity_residual if wing.morph else None,
    }


def write_geometry(path, wing: WingGeometry) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(geometry_record(wing), indent=1))
    return path
