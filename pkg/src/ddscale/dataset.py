"""Multi-fidelity snapshots, graph encoding and the on-disk dataset store."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import doe
from .geom import AirfoilCoordinates, DesignVector, build_wing, solve_planform
from .vlm import FlowCondition, LatticeConfig, build_lattice, run_vlm_sweep

TRAINING_AOAS = (11.0, 13.0, 15.0, 17.0, 19.0)
ALL_AOAS = tuple(float(a) for a in range(11, 20))
MACH = 0.3

# synthetic high-fidelity stand-in; fixed so runs are reproducible
K1 = 0.35
K2 = 0.8

FEATURES = ("x_mac", "eta", "chord_fraction", "twist", "camber_slope", "sweep",
            "sin_aoa", "cos_aoa", "mach", "lf_dcp")

_PANEL_KEYS = ("centroid", "chord_fraction", "twist_rad", "camber_slope", "sweep_rad")


class DatasetError(RuntimeError):
    """Raised for corrupted, missing or inconsistent dataset files."""


@dataclass
class Snapshot:
    call_sign: str
    design: DesignVector
    flow: FlowCondition
    lf_field: np.ndarray
    panels: dict
    nc: int
    ns: int
    reference: dict
    hf_field: np.ndarray | None = None
    hf_source: str = "absent"

    def __post_init__(self):
        self.lf_field = np.asarray(self.lf_field, dtype=float)
        if not np.all(np.isfinite(self.lf_field)):
            raise DatasetError(f"{self.key}: non-finite low-fidelity field")
        if self.hf_field is not None:
            self.hf_field = np.asarray(self.hf_field, dtype=float)
            if self.hf_field.shape != self.lf_field.shape:
                raise DatasetError(f"{self.key}: hf_field length {len(self.hf_field)} != {len(self.lf_field)}")

    @property
    def key(self) -> str:
        return f"{self.call_sign}_{self.flow.aoa_deg:g}"

    def to_record(self) -> dict:
        return {
            "call_sign": self.call_sign,
            "design": asdict(self.design),
            "flow": {"mach": self.flow.mach, "aoa_deg": self.flow.aoa_deg},
            "nc": self.nc,
            "ns": self.ns,
            "reference": self.reference,
            "panels": {k: np.asarray(v).tolist() for k, v in self.panels.items()},
            "lf_field": self.lf_field.tolist(),
            "hf_field": None if self.hf_field is None else self.hf_field.tolist(),
            "hf_source": self.hf_source,
        }

    @classmethod
    def from_record(cls, rec: dict) -> Snapshot:
        return cls(
            rec["call_sign"], DesignVector(**rec["design"]), FlowCondition(**rec["flow"]),
            np.array(rec["lf_field"]), {k: np.array(v) for k, v in rec["panels"].items()},
            int(rec["nc"]), int(rec["ns"]), dict(rec["reference"]),
            None if rec["hf_field"] is None else np.array(rec["hf_field"]), rec["hf_source"],
        )


def make_snapshots(dv: DesignVector, flows, lattice_config: LatticeConfig = LatticeConfig(),
                   baseline: AirfoilCoordinates | None = None, call_sign: str | None = None,
                   infeasible: str = "raise") -> list[Snapshot]:
    """Build the wing once and solve every flow condition on its lattice."""
    cs = call_sign or doe.call_sign(dv.as_array())
    wing = build_wing(dv, baseline, infeasible=infeasible)
    clipped = wing.planform.tip_chord != solve_planform(dv).tip_chord
    lat = build_lattice(wing, lattice_config)
    try:
        sols = run_vlm_sweep(lat, list(flows))
    except Exception as exc:
        raise RuntimeError(f"VLM failure for {cs}: {exc}") from exc
    panels = {
        "centroid": lat.centroid,
        "chord_fraction": lat.chord_fraction,
        "twist_rad": lat.twist_rad,
        "camber_slope": lat.camber_slope,
        "sweep_rad": lat.sweep_rad,
    }
    out = []
    for sol in sols:
        ref = {"area": lat.ref_area, "mac": lat.mac, "semi_span": lat.semi_span,
               "cl": sol.cl, "cdi": sol.cdi, "cm": sol.cm, "tip_clipped": bool(clipped)}
        out.append(Snapshot(cs, dv, sol.flow, sol.dcp, panels, lat.nc, lat.ns, ref))
    return out


def make_snapshot(dv: DesignVector, flow: FlowCondition, lattice_config: LatticeConfig = LatticeConfig(),
                  baseline: AirfoilCoordinates | None = None) -> Snapshot:
    return make_snapshots(dv, [flow], lattice_config, baseline)[0]


def _leading_edge_outboard_bump(xc, eta):
    return np.exp(-xc / 0.1) * (0.25 + 0.75 * eta**2)


def synthetic_hf(snapshot: Snapshot) -> np.ndarray:
    """Deterministic nonlinear stand-in for a high-fidelity pressure field.

    hf = lf (1 + K1 sin^2 a) + K2 sin^2 a * w(x/c, y/(B/2)), with w a fixed
    bump weighting the leading edge and the outboard panels. This only
    exercises the pipeline; it is not a physical model.
    """
    s2 = math.sin(snapshot.flow.alpha) ** 2
    eta = np.abs(snapshot.panels["centroid"][:, 1]) / snapshot.reference["semi_span"]
    w = _leading_edge_outboard_bump(snapshot.panels["chord_fraction"], eta)
    return snapshot.lf_field * (1.0 + K1 * s2) + K2 * s2 * w


def attach_synthetic_hf(snapshots) -> None:
    for s in snapshots:
        s.hf_field = synthetic_hf(s)
        s.hf_source = "synthetic"


def attach_external_hf(snapshots, directory) -> None:
    """Attach per-panel targets from ``<call_sign>_<aoa>.json`` or ``.txt`` files."""
    directory = Path(directory)
    for s in snapshots:
        jpath = directory / f"{s.key}.json"
        tpath = directory / f"{s.key}.txt"
        if jpath.exists():
            rec = json.loads(jpath.read_text())
            values = rec["hf_field"] if isinstance(rec, dict) else rec
        elif tpath.exists():
            values = np.loadtxt(tpath, ndmin=1)
        else:
            raise DatasetError(f"{s.key}: no external high-fidelity file in {directory}")
        values = np.asarray(values, dtype=float)
        if values.shape != s.lf_field.shape:
            raise DatasetError(f"{s.key}: external field has {values.size} entries, expected {s.lf_field.size}")
        s.hf_field = values
        s.hf_source = "external"


# --------------------------------------------------------------------------
# Graph encoding
# --------------------------------------------------------------------------

@dataclass
class Normalization:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std


@dataclass
class FieldGraph:
    call_sign: str
    aoa_deg: float
    node_features: np.ndarray
    edge_list: np.ndarray
    edge_distance: np.ndarray
    target: np.ndarray | None
    normalization: Normalization

    @property
    def num_nodes(self) -> int:
        return len(self.node_features)


def raw_features(s: Snapshot) -> np.ndarray:
    c = s.panels["centroid"]
    n = len(s.lf_field)
    a = s.flow.alpha
    return np.column_stack([
        c[:, 0] / s.reference["mac"],
        c[:, 1] / s.reference["semi_span"],
        s.panels["chord_fraction"],
        s.panels["twist_rad"],
        s.panels["camber_slope"],
        s.panels["sweep_rad"],
        np.full(n, math.sin(a)),
        np.full(n, math.cos(a)),
        np.full(n, s.flow.mach),
        s.lf_field,
    ])


def fit_normalization(training) -> Normalization:
    """Per-feature z-score statistics over every node of the training snapshots.

    Constant features get unit scale so they map to zero rather than NaN.
    Snapshots are stacked in key order so the statistics do not depend on
    the order they were passed in.
    """
    ordered = sorted(training, key=lambda s: (s.call_sign, s.flow.aoa_deg, s.flow.mach))
    x = np.vstack([raw_features(s) for s in ordered])
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
    return Normalization(mean, std)


def lattice_edges(nc: int, ns: int) -> np.ndarray:
    """Undirected 4-neighbourhood pairs on the (chordwise, spanwise) panel grid."""
    idx = np.arange(nc * ns).reshape(nc, ns)
    span_pairs = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    chord_pairs = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return np.vstack([span_pairs, chord_pairs])


def to_graph(s: Snapshot, normalization: Normalization, require_target: bool = True) -> FieldGraph:
    if require_target and s.hf_field is None:
        raise DatasetError(f"{s.key}: missing high-fidelity target")
    edges = lattice_edges(s.nc, s.ns)
    c = s.panels["centroid"]
    dist = np.linalg.norm(c[edges[:, 0]] - c[edges[:, 1]], axis=1) / s.reference["mac"]
    x = normalization.apply(raw_features(s))
    return FieldGraph(s.call_sign, s.flow.aoa_deg, x, edges, dist,
                      None if s.hf_field is None else s.hf_field.copy(), normalization)


# --------------------------------------------------------------------------
# Dataset levels and storage
# --------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    level: int | str
    geometry_count: int
    aoa_list: list[float]
    snapshot_count: int
    rows: list[str] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.snapshot_count != self.geometry_count * len(self.aoa_list):
            raise DatasetError(
                f"manifest D={self.snapshot_count} != {self.geometry_count} geometries x {len(self.aoa_list)} AOAs")


def solver_hash(lattice_config: LatticeConfig, mach: float) -> str:
    blob = json.dumps({"lattice": asdict(lattice_config), "mach": mach}, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _solve_geometry(args):
    cs, row, aoas, mach, lattice_config, infeasible = args
    flows = [FlowCondition(mach, a) for a in aoas]
    return make_snapshots(DesignVector.from_array(row), flows, lattice_config, call_sign=cs,
                          infeasible=infeasible)


def build_samples(samples: doe.SampleSet, aoas=TRAINING_AOAS, mach: float = MACH,
                  lattice_config: LatticeConfig = LatticeConfig(), jobs: int = 1,
                  provenance: dict | None = None,
                  infeasible: str = "clip-tip") -> tuple[DatasetManifest, list[Snapshot]]:
    """Snapshots for every row of a sample set; repeated designs are solved once.

    Designs whose closed tip chord is negative are built with the tip pinned
    to zero by default so every level keeps its nominal size; pass
    ``infeasible="raise"`` to reject them instead.
    """
    aoas = [float(a) for a in aoas]
    unique = {}
    for cs, row in zip(samples.call_signs, samples.scaled_samples):
        unique.setdefault(cs, row)
    tasks = [(cs, row, aoas, mach, lattice_config, infeasible) for cs, row in unique.items()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_solve_geometry, tasks))
    else:
        results = [_solve_geometry(t) for t in tasks]
    by_cs = {t[0]: r for t, r in zip(tasks, results)}
    snapshots = [s for cs in samples.call_signs for s in by_cs[cs]]
    prov = {"solver_hash": solver_hash(lattice_config, mach), "mach": mach,
            "lattice": asdict(lattice_config), "infeasible": infeasible,
            "tip_clipped": sorted({s.call_sign for s in snapshots if s.reference["tip_clipped"]})}
    prov.update(provenance or {})
    manifest = DatasetManifest(samples.level, len(samples), aoas, len(snapshots),
                               list(samples.call_signs), prov)
    return manifest, snapshots


def build_level(level: int, aoas=TRAINING_AOAS, mach: float = MACH,
                lattice_config: LatticeConfig = LatticeConfig(), space: doe.DesignSpace | None = None,
                skip: int = 16, jobs: int = 1, infeasible: str = "clip-tip"):
    samples = doe.saltelli_level(level, space, skip)
    return build_samples(samples, aoas, mach, lattice_config, jobs, {"sampler": "saltelli", "skip": skip},
                         infeasible)


def build_holdout(count: int = 16, seed: int = 1, aoas=TRAINING_AOAS, mach: float = MACH,
                  lattice_config: LatticeConfig = LatticeConfig(), space: doe.DesignSpace | None = None,
                  jobs: int = 1, infeasible: str = "clip-tip"):
    samples = doe.lhs_holdout(count, space, seed)
    return build_samples(samples, aoas, mach, lattice_config, jobs, {"sampler": "lhs", "seed": seed},
                         infeasible)


def write_dataset(path, manifest: DatasetManifest, snapshots) -> Path:
    """``manifest.json`` plus ``snapshots/<call_sign>_<aoa>.json``; repeated designs share files."""
    path = Path(path)
    snap_dir = path / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    written = set()
    for s in snapshots:
        if s.key in written:
            continue
        (snap_dir / f"{s.key}.json").write_text(json.dumps(s.to_record()))
        written.add(s.key)
    (path / "manifest.json").write_text(json.dumps(asdict(manifest), indent=1, sort_keys=True))
    return path


def read_dataset(path) -> tuple[DatasetManifest, list[Snapshot]]:
    path = Path(path)
    mpath = path / "manifest.json"
    try:
        raw = json.loads(mpath.read_text())
    except FileNotFoundError as exc:
        raise DatasetError(f"missing manifest {mpath}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"corrupted manifest {mpath}: {exc}") from exc
    manifest = DatasetManifest(**raw)
    if len(manifest.rows) != manifest.geometry_count:
        raise DatasetError(f"manifest lists {len(manifest.rows)} rows for {manifest.geometry_count} geometries")
    expected = {f"{cs}_{a:g}" for cs in manifest.rows for a in manifest.aoa_list}
    on_disk = {p.stem for p in (path / "snapshots").glob("*.json")}
    missing = sorted(expected - on_disk)
    if missing:
        raise DatasetError(f"snapshot {missing[0]} listed in manifest but missing ({len(missing)} missing)")
    extra = sorted(on_disk - expected)
    if extra:
        raise DatasetError(f"snapshot {extra[0]} on disk but not in manifest (D mismatch)")
    cache = {}
    snapshots = []
    for cs in manifest.rows:
        for a in manifest.aoa_list:
            key = f"{cs}_{a:g}"
            if key not in cache:
                try:
                    cache[key] = Snapshot.from_record(json.loads((path / "snapshots" / f"{key}.json").read_text()))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise DatasetError(f"snapshot {key}: corrupted record ({exc})") from exc
            snapshots.append(cache[key])
    return manifest, snapshots


def write_summary_csv(path, snapshots) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["call_sign", "aoa_deg", "cl", "cdi", "cm"])
        for s in snapshots:
            r = s.reference
            w.writerow([s.call_sign, repr(s.flow.aoa_deg), repr(r["cl"]), repr(r["cdi"]), repr(r["cm"])])
    return path


def nested_levels(levels, aoas=TRAINING_AOAS, mach: float = MACH,
                  lattice_config: LatticeConfig = LatticeConfig(), space: doe.DesignSpace | None = None,
                  skip: int = 16, jobs: int = 1,
                  infeasible: str = "clip-tip") -> dict[int, tuple[DatasetManifest, list[Snapshot]]]:
    """Solve the largest requested level once and carve the nested smaller levels out of it."""
    levels = sorted(set(levels))
    top_manifest, top = build_level(levels[-1], aoas, mach, lattice_config, space, skip, jobs, infeasible)
    by_key = {s.key: s for s in top}
    out = {}
    for level in levels:
        samples = doe.saltelli_level(level, space, skip)
        snaps = []
        for cs in samples.call_signs:
            for a in top_manifest.aoa_list:
                key = f"{cs}_{a:g}"
                if key not in by_key:
                    raise DatasetError(f"snapshot {key} of level {level} missing from level {levels[-1]}")
                snaps.append(by_key[key])
        prov = dict(top_manifest.provenance)
        prov["tip_clipped"] = sorted({s.call_sign for s in snaps if s.reference["tip_clipped"]})
        manifest = DatasetManifest(level, len(samples), list(top_manifest.aoa_list), len(snaps),
                                   list(samples.call_signs), prov)
        out[level] = (manifest, snaps)
    return out
