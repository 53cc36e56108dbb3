"""Horseshoe vortex-lattice solver for thin cambered, twisted wings."""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geom import WingGeometry

FOUR_PI = 4.0 * math.pi
_CORE = 1e-8
_BLOCK = 256


class SolverError(RuntimeError):
    def __init__(self, message, condition=None):
        super().__init__(message if condition is None else f"{message} (cond ~ {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class LatticeConfig:
    chordwise_panels: int = 30
    spanwise_panels: int = 32
    chordwise_spacing: str = "cosine"
    spanwise_spacing: str = "uniform"
    wake: str = "body"

    def __post_init__(self):
        if self.chordwise_panels < 1:
            raise ValueError("chordwise_panels must be >= 1")
        if self.spanwise_panels < 2 or self.spanwise_panels % 2:
            raise ValueError("spanwise_panels must be even and >= 2")
        for name in ("chordwise_spacing", "spanwise_spacing"):
            if getattr(self, name) not in ("uniform", "cosine"):
                raise ValueError(f"{name} must be 'uniform' or 'cosine'")
        if self.wake not in ("freestream", "body"):
            raise ValueError("wake must be 'freestream' or 'body'")


@dataclass(frozen=True)
class FlowCondition:
    mach: float = 0.3
    aoa_deg: float = 11.0

    def __post_init__(self):
        if not 0.0 <= self.mach < 0.7:
            raise ValueError(f"mach must be in [0, 0.7), got {self.mach}")
        if abs(self.aoa_deg) > 25.0:
            raise ValueError(f"|aoa| must be <= 25 deg, got {self.aoa_deg}")

    @property
    def alpha(self) -> float:
        return math.radians(self.aoa_deg)

    @property
    def beta(self) -> float:
        return math.sqrt(1.0 - self.mach**2)

    @property
    def freestream(self) -> np.ndarray:
        return np.array([math.cos(self.alpha), 0.0, math.sin(self.alpha)])


@dataclass
class Lattice:
    """Panel arrays in (chordwise, spanwise) row-major order: index = i * ns + j.

    Corners are ordered LE-left, LE-right, TE-right, TE-left (left = smaller y).
    """

    nc: int
    ns: int
    corners: np.ndarray
    bound_a: np.ndarray
    bound_b: np.ndarray
    control: np.ndarray
    normal: np.ndarray
    area: np.ndarray
    projected_area: np.ndarray
    chord: np.ndarray
    local_chord: np.ndarray
    chord_fraction: np.ndarray
    y_mid: np.ndarray
    twist_rad: np.ndarray
    camber_slope: np.ndarray
    sweep_rad: np.ndarray
    semi_span: float
    ref_area: float
    mac: float
    wake: str = "body"

    @property
    def size(self) -> int:
        return self.nc * self.ns

    @property
    def centroid(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def bound_mid(self) -> np.ndarray:
        return 0.5 * (self.bound_a + self.bound_b)


@dataclass
class VlmSolution:
    gamma: np.ndarray
    flow: FlowCondition
    residual: float
    dcp: np.ndarray | None = None
    cl: float | None = None
    cdi: float | None = None
    cm: float | None = None
    reference: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# Lattice construction
# --------------------------------------------------------------------------

def _chord_nodes(n: int, law: str) -> np.ndarray:
    if law == "cosine":
        s = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, n + 1)))
    else:
        s = np.linspace(0.0, 1.0, n + 1)
    s[0], s[-1] = 0.0, 1.0
    return s


def _span_nodes(semi_span: float, ns: int, law: str) -> np.ndarray:
    half = ns // 2
    if law == "cosine":
        eta = np.sin(0.5 * np.pi * np.arange(half + 1) / half)
    else:
        eta = np.arange(half + 1) / half
    eta[-1] = 1.0
    y = semi_span * eta
    return np.concatenate([-y[::-1], y[1:]])


def build_lattice(geometry: WingGeometry, config: LatticeConfig = LatticeConfig()) -> Lattice:
    """Quadrilateral lattice over the full span, camber and twist built into the surface."""
    nc, ns = config.chordwise_panels, config.spanwise_panels
    semi = geometry.planform.semi_span
    s = _chord_nodes(nc, config.chordwise_spacing)
    y = _span_nodes(semi, ns, config.spanwise_spacing)

    x_le = geometry.leading_edge_x(y)
    c = geometry.chord(y)
    theta = np.radians(geometry.twist_deg(y))
    zc = geometry.camber_at(s)
    zq = geometry.camber_at(0.25)

    # node grid (nc+1, ns+1, 3)
    dx = (s[:, None] - 0.25) * c[None, :]
    dz = (zc[:, None] - zq) * c[None, :]
    xq = x_le + 0.25 * c
    nodes = np.empty((nc + 1, ns + 1, 3))
    nodes[..., 0] = xq[None, :] + dx * np.cos(theta)[None, :] + dz * np.sin(theta)[None, :]
    nodes[..., 1] = y[None, :]
    nodes[..., 2] = zq * c[None, :] + dz * np.cos(theta)[None, :] - dx * np.sin(theta)[None, :]

    a = nodes[:-1, :-1]
    b = nodes[:-1, 1:]
    cc = nodes[1:, 1:]
    d = nodes[1:, :-1]
    corners = np.stack([a, b, cc, d], axis=2).reshape(-1, 4, 3)
    a, b, cc, d = (corners[:, k] for k in range(4))

    bound_a = a + 0.25 * (d - a)
    bound_b = b + 0.25 * (cc - b)
    control = 0.5 * ((a + 0.75 * (d - a)) + (b + 0.75 * (cc - b)))
    cross = np.cross(cc - a, b - d)
    norm = np.linalg.norm(cross, axis=1)
    area = 0.5 * norm
    projected = 0.5 * np.abs(cross[:, 2])
    safe = np.where(norm > 0, norm, 1.0)
    normal = cross / safe[:, None]
    normal[norm == 0] = (0.0, 0.0, 1.0)
    chord = 0.5 * ((d - a)[:, 0] + (cc - b)[:, 0])

    y_mid = np.broadcast_to(0.5 * (y[:-1] + y[1:]), (nc, ns)).reshape(-1)
    local_chord = np.broadcast_to(0.5 * (c[:-1] + c[1:]), (nc, ns)).reshape(-1)
    s_mid = np.broadcast_to(0.5 * (s[:-1] + s[1:])[:, None], (nc, ns)).reshape(-1)
    twist = np.broadcast_to(0.5 * (theta[:-1] + theta[1:]), (nc, ns)).reshape(-1)
    slope = geometry.camber_slope_at(s_mid)
    sweep_strip = np.arctan2(np.abs(np.diff(x_le)), np.diff(y))
    sweep = np.broadcast_to(sweep_strip, (nc, ns)).reshape(-1)

    p = geometry.planform
    return Lattice(nc, ns, corners, bound_a, bound_b, control, normal, area, projected,
                   chord, local_chord, s_mid, y_mid, twist, slope, sweep,
                   semi, p.area, p.mac, config.wake)


# --------------------------------------------------------------------------
# Biot-Savart kernels (unit circulation)
# --------------------------------------------------------------------------

def _segment(p, a, b):
    """Velocity at points p (M,1,3) from finite segments a->b (1,N,3)."""
    r1 = p - a
    r2 = p - b
    r0 = b - a
    cr = np.cross(r1, r2)
    cr2 = np.einsum("...k,...k", cr, cr)
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    l2 = np.einsum("...k,...k", r0, r0)
    ok = (cr2 > (_CORE**2) * l2 * l2) & (n1 > 0) & (n2 > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.einsum("...k,...k", r0, r1 / n1[..., None] - r2 / n2[..., None]) / (FOUR_PI * cr2)
    k = np.where(ok, k, 0.0)
    return cr * k[..., None]


def _semi_infinite(p, a, direction):
    """Velocity from a semi-infinite filament starting at a, running along unit direction."""
    r = p - a
    dxr = np.cross(direction, r)
    dxr2 = np.einsum("...k,...k", dxr, dxr)
    nr = np.linalg.norm(r, axis=-1)
    ok = dxr2 > (_CORE**2) * np.maximum(nr * nr, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (1.0 + np.einsum("...k,...k", r, direction) / nr) / (FOUR_PI * dxr2)
    k = np.where(ok, k, 0.0)
    return dxr * k[..., None]


def _stretch(points, beta):
    out = np.array(points, dtype=float, copy=True)
    out[..., 0] /= beta
    return out


def _wake_direction(flow: FlowCondition, wake: str) -> np.ndarray:
    if wake == "body":
        d = np.array([1.0, 0.0, 0.0])
    else:
        d = flow.freestream.copy()
    d[0] /= flow.beta
    return d / np.linalg.norm(d)


def induced_velocity_matrix(points, lattice: Lattice, flow: FlowCondition) -> np.ndarray:
    """(M, N, 3) velocity at each point induced by each unit-strength horseshoe.

    Compressibility enters through Prandtl-Glauert streamwise stretching: the
    kernel runs in coordinates with x scaled by 1/beta, and the axial velocity
    is mapped back by the same factor.
    """
    beta = flow.beta
    pts = _stretch(points, beta)
    a = _stretch(lattice.bound_a, beta)[None]
    b = _stretch(lattice.bound_b, beta)[None]
    d = _wake_direction(flow, lattice.wake)
    out = np.empty((len(pts), lattice.size, 3))
    for start in range(0, len(pts), _BLOCK):
        p = pts[start:start + _BLOCK, None, :]
        v = _segment(p, a, b) + _semi_infinite(p, b, d) - _semi_infinite(p, a, d)
        v[..., 0] /= beta
        out[start:start + _BLOCK] = v
    return out


def influence_matrix(lattice: Lattice, flow: FlowCondition) -> np.ndarray:
    v = induced_velocity_matrix(lattice.control, lattice, flow)
    return np.einsum("mnk,mk->mn", v, lattice.normal)


# --------------------------------------------------------------------------
# Solve and post-process
# --------------------------------------------------------------------------

def _factor(aic):
    with warnings.catch_warnings():
        # singularity is reported below with a condition estimate
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(aic, check_finite=True)
    diag = np.abs(np.diag(lu))
    if not np.all(np.isfinite(diag)) or diag.min() <= 1e-14 * diag.max():
        raise SolverError("singular influence matrix", float(np.linalg.cond(aic)))
    return lu, piv


def solve_vlm(lattice: Lattice, flow: FlowCondition, *, _aic=None, _factors=None) -> VlmSolution:
    """Circulations from the no-penetration condition at the control points."""
    aic = influence_matrix(lattice, flow) if _aic is None else _aic
    rhs = -lattice.normal @ flow.freestream
    lu, piv = _factor(aic) if _factors is None else _factors
    gamma = scipy.linalg.lu_solve((lu, piv), rhs)
    scale = np.max(np.abs(rhs))
    resid = float(np.max(np.abs(aic @ gamma - rhs)) / scale) if scale > 0 else float(np.max(np.abs(aic @ gamma)))
    return VlmSolution(gamma, flow, resid)


def panel_loads(solution: VlmSolution, lattice: Lattice, flow: FlowCondition | None = None) -> np.ndarray:
    """Net panel loading dCp = 2 (G_i - G_{i-1}) / (V dc) with unit freestream.

    G is the chordwise running sum of horseshoe strengths, i.e. the bound
    circulation carried by the lattice line at each panel's quarter chord.
    """
    g = solution.gamma.reshape(lattice.nc, lattice.ns)
    running = np.cumsum(g, axis=0)
    jump = np.diff(running, axis=0, prepend=0.0).reshape(-1)
    chord = lattice.chord
    with np.errstate(divide="ignore", invalid="ignore"):
        dcp = np.where(chord > 0, 2.0 * jump / np.where(chord > 0, chord, 1.0), 0.0)
    solution.dcp = dcp
    return dcp


def integrate_coeffs(dcp, lattice: Lattice, flow: FlowCondition, reference: dict | None = None,
                     gamma=None, *, _bound_velocity=None) -> tuple[float, float, float]:
    """Lift and moment from panel pressure forces; induced drag from Kutta-Joukowski at the bound vortices."""
    reference = dict(reference or {})
    s_ref = reference.get("area", lattice.ref_area)
    mac = reference.get("mac", lattice.mac)
    origin = np.asarray(reference.get("origin", (0.0, 0.0, 0.0)), dtype=float)
    if not s_ref > 0:
        raise ValueError("reference area must be positive")
    a = flow.alpha
    lift_dir = np.array([-math.sin(a), 0.0, math.cos(a)])
    force = (np.asarray(dcp) * lattice.area)[:, None] * lattice.normal
    cl = float(np.sum(force @ lift_dir) / s_ref)
    arm = lattice.bound_mid - origin
    cm = float(np.sum(np.cross(arm, force)[:, 1]) / (s_ref * mac)) if mac > 0 else 0.0

    cdi = 0.0
    if gamma is not None:
        v = induced_velocity_matrix(lattice.bound_mid, lattice, flow) if _bound_velocity is None else _bound_velocity
        vel = np.einsum("mnk,n->mk", v, gamma)
        seg = lattice.bound_b - lattice.bound_a
        kj = 2.0 * gamma[:, None] * np.cross(vel, seg)
        cdi = float(np.sum(kj @ flow.freestream) / s_ref)
    return cl, cdi, cm


def run_vlm(lattice: Lattice, flow: FlowCondition, reference: dict | None = None) -> VlmSolution:
    sol = solve_vlm(lattice, flow)
    dcp = panel_loads(sol, lattice, flow)
    sol.cl, sol.cdi, sol.cm = integrate_coeffs(dcp, lattice, flow, reference, sol.gamma)
    ref = {"area": lattice.ref_area, "mac": lattice.mac, "origin": [0.0, 0.0, 0.0]}
    ref.update(reference or {})
    sol.reference = ref
    return sol


def run_vlm_sweep(lattice: Lattice, flows, reference: dict | None = None) -> list[VlmSolution]:
    """Solve several flow conditions, reusing the factorisation where the matrix allows.

    With a body-axis wake the influence matrix depends only on Mach number.
    """
    cache = {}
    out = []
    for flow in flows:
        key = flow.mach if lattice.wake == "body" else (flow.mach, flow.aoa_deg)
        if key not in cache:
            aic = influence_matrix(lattice, flow)
            cache[key] = (aic, _factor(aic), induced_velocity_matrix(lattice.bound_mid, lattice, flow))
        aic, factors, vb = cache[key]
        sol = solve_vlm(lattice, flow, _aic=aic, _factors=factors)
        dcp = panel_loads(sol, lattice, flow)
        sol.cl, sol.cdi, sol.cm = integrate_coeffs(dcp, lattice, flow, reference, sol.gamma, _bound_velocity=vb)
        ref = {"area": lattice.ref_area, "mac": lattice.mac, "origin": [0.0, 0.0, 0.0]}
        ref.update(reference or {})
        sol.reference = ref
        out.append(sol)
    return out


def solution_record(sol: VlmSolution, lattice: Lattice, design=None) -> dict:
    if dataclasses.is_dataclass(design):
        design = dataclasses.asdict(design)
    return {
        "design": design,
        "flow": {"mach": sol.flow.mach, "aoa_deg": sol.flow.aoa_deg},
        "panels": {
            "centroid": lattice.centroid.tolist(),
            "area": lattice.area.tolist(),
            "normal": lattice.normal.tolist(),
        },
        "gamma": sol.gamma.tolist(),
        "dcp": None if sol.dcp is None else sol.dcp.tolist(),
        "coefficients": {"cl": sol.cl, "cdi": sol.cdi, "cm": sol.cm},
        "reference": sol.reference,
        "residual": sol.residual,
    }
