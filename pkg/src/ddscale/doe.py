"""Design of experiments: Sobol/Saltelli training levels and LHS holdout sets."""
from __future__ import annotations

import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

VARIABLES = ("droop_deg", "sweep_in_deg", "sweep_out_deg", "sweep_te_deg", "break_fraction", "span")

_BITS = 32
_SCALE = 2.0**-_BITS


@dataclass(frozen=True)
class DesignSpace:
    """Box bounds over the six wing design variables."""

    names: tuple[str, ...] = VARIABLES
    lower: tuple[float, ...] = (-8.0, 47.0, 35.0, 0.0, 0.32, 1100.0)
    upper: tuple[float, ...] = (7.0, 67.0, 60.0, 25.0, 0.47, 1300.0)

    def __post_init__(self):
        if not (len(self.names) == len(self.lower) == len(self.upper)):
            raise ValueError("names, lower and upper must have the same length")
        for name, lo, hi in zip(self.names, self.lower, self.upper):
            if not lo < hi:
                raise ValueError(f"bounds for {name!r}: lower {lo} must be < upper {hi}")

    @property
    def dims(self) -> int:
        return len(self.names)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def span_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float) - self.lower_array

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower_array) and np.all(x <= np.asarray(self.upper)))


@dataclass
class SampleSet:
    """Unit and scaled samples for one dataset level (or the holdout)."""

    level: int | str
    unit_samples: np.ndarray
    scaled_samples: np.ndarray
    call_signs: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.unit_samples)


@dataclass
class SaltelliPlan:
    base_count: int
    dims: int
    skip: int
    base_matrix: np.ndarray
    A: np.ndarray
    B: np.ndarray
    AB: list[np.ndarray]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.A, *self.AB, self.B])


# --------------------------------------------------------------------------
# Sobol sequence
# --------------------------------------------------------------------------

@lru_cache(maxsize=1)
def _direction_table() -> list[tuple[int, int, list[int]]]:
    text = resources.files("ddscale").joinpath("data/joe_kuo_64.txt").read_text()
    table = []
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("d"):
            continue
        parts = [int(p) for p in line.split()]
        table.append((parts[1], parts[2], parts[3:]))
    return table


MAX_SOBOL_DIMS = 64


@lru_cache(maxsize=8)
def _direction_numbers(dims: int) -> np.ndarray:
    """(dims, 32) direction integers scaled by 2**32."""
    v = np.zeros((dims, _BITS), dtype=np.uint64)
    v[0] = [1 << (_BITS - k) for k in range(1, _BITS + 1)]
    table = _direction_table()
    for j in range(1, dims):
        s, a, m = table[j - 1]
        row = [0] * (_BITS + 1)
        for k in range(1, s + 1):
            row[k] = m[k - 1] << (_BITS - k)
        for k in range(s + 1, _BITS + 1):
            val = row[k - s] ^ (row[k - s] >> s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    val ^= row[k - i]
            row[k] = val
        v[j] = row[1:]
    return v


def sobol_points(count: int, dims: int) -> np.ndarray:
    """First ``count`` points of the unscrambled base-2 Sobol sequence.

    Points are produced in Gray-code order, each one obtained by XOR-ing the
    previous integer state with a single direction number. Row 0 is the origin.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 1 <= dims <= MAX_SOBOL_DIMS:
        raise ValueError(f"unsupported dimension {dims}; the bundled table covers 1..{MAX_SOBOL_DIMS}")
    if count > 2**_BITS:
        raise ValueError("count exceeds the 32-bit generator period")
    v = _direction_numbers(dims)
    out = np.zeros((count, dims), dtype=np.uint64)
    state = np.zeros(dims, dtype=np.uint64)
    for i in range(1, count):
        # index of the lowest zero bit of i-1
        c = ((~(i - 1)) & i).bit_length() - 1
        state = state ^ v[:, c]
        out[i] = state
    return out.astype(np.float64) * _SCALE


# --------------------------------------------------------------------------
# Saltelli and LHS
# --------------------------------------------------------------------------

def scale_to_bounds(unit, space: DesignSpace) -> np.ndarray:
    """Affine map from [0, 1) to the design bounds, row- or matrix-wise."""
    u = np.asarray(unit, dtype=float)
    if np.any(u < 0.0) or np.any(u >= 1.0):
        raise ValueError("unit samples must lie in [0, 1)")
    if u.shape[-1] != space.dims:
        raise ValueError(f"expected {space.dims} columns, got {u.shape[-1]}")
    return space.lower_array + u * space.span_array


def call_sign(scaled_row) -> str:
    """Deterministic 10-character identifier for a scaled design vector."""
    key = ",".join(repr(float(x)) for x in scaled_row).encode()
    digest = int.from_bytes(hashlib.sha256(key).digest(), "big")
    alphabet = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    chars = []
    for _ in range(10):
        digest, r = divmod(digest, 36)
        chars.append(alphabet[r])
    return "".join(chars)


def saltelli_plan(P: int, dims: int, skip: int = 16) -> SaltelliPlan:
    if P < 1:
        raise ValueError("base count P must be >= 1")
    if skip < 0:
        raise ValueError("skip must be >= 0")
    if P & (P - 1):
        log.warning("P=%d is not a power of two; Sobol balance is degraded", P)
    S = sobol_points(P + skip, 2 * dims)
    A = S[skip:, :dims].copy()
    B = S[skip:, dims:].copy()
    AB = []
    for k in range(dims):
        m = A.copy()
        m[:, k] = B[:, k]
        AB.append(m)
    return SaltelliPlan(P, dims, skip, S, A, B, AB)


def saltelli_sample(P: int, space: DesignSpace | None = None, skip: int = 16, level=None) -> SampleSet:
    """Saltelli design stacked as [A; AB_1; ...; AB_n; B], P*(n+2) rows."""
    space = space or DesignSpace()
    plan = saltelli_plan(P, space.dims, skip)
    unit = plan.stacked()
    scaled = scale_to_bounds(unit, space)
    if level is None:
        level = int(math.log2(P)) + 1 if P & (P - 1) == 0 else f"P{P}"
    return SampleSet(level, unit, scaled, [call_sign(r) for r in scaled])


def level_base_count(level: int) -> int:
    if not 1 <= level <= 6:
        raise ValueError(f"level must be in 1..6, got {level}")
    return 2 ** (level - 1)


def saltelli_level(level: int, space: DesignSpace | None = None, skip: int = 16) -> SampleSet:
    return saltelli_sample(level_base_count(level), space, skip, level=level)


def lhs_holdout(count: int = 16, space: DesignSpace | None = None, seed: int = 0) -> SampleSet:
    """Latin hypercube: one sample per stratum per column, jittered within strata."""
    if count < 1:
        raise ValueError("count must be >= 1")
    space = space or DesignSpace()
    rng = np.random.default_rng(seed)
    unit = np.empty((count, space.dims))
    for j in range(space.dims):
        perm = rng.permutation(count)
        unit[:, j] = (perm + rng.random(count)) / count
    # jitter can round up to exactly 1.0 in float arithmetic
    unit = np.minimum(unit, np.nextafter(1.0, 0.0))
    scaled = scale_to_bounds(unit, space)
    return SampleSet("holdout", unit, scaled, [call_sign(r) for r in scaled])


def avg_nn_distance(unit_samples, return_duplicates: bool = False):
    """Mean Euclidean distance from each sample to its nearest other sample."""
    x = np.asarray(unit_samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2:
        raise ValueError("need at least two samples")
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    nn = np.sqrt(d2.min(axis=1))
    h = float(nn.mean())
    if return_duplicates:
        return h, int(np.count_nonzero(nn == 0.0))
    return h


def write_samples_csv(path, samples: SampleSet, space: DesignSpace | None = None, unit: bool = False):
    space = space or DesignSpace()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["call_sign", *space.names, "level"])
        for cs, row in zip(samples.call_signs, samples.scaled_samples):
            w.writerow([cs, *(repr(float(v)) for v in row), samples.level])
    if unit:
        upath = path.with_name(path.stem + "_unit.csv")
        with upath.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["call_sign", *space.names, "level"])
            for cs, row in zip(samples.call_signs, samples.unit_samples):
                w.writerow([cs, *(repr(float(v)) for v in row), samples.level])
    return path


def read_samples_csv(path, space: DesignSpace | None = None) -> SampleSet:
    space = space or DesignSpace()
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    scaled = np.array([[float(r[n]) for n in space.names] for r in rows])
    unit = (scaled - space.lower_array) / space.span_array
    level = rows[0]["level"] if rows else "?"
    level = int(level) if str(level).isdigit() else level
    return SampleSet(level, unit, scaled, [r["call_sign"] for r in rows])
