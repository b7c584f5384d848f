"""Finite atomic measures, Frostman certification and dyadic conditional measures."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.signal import fftconvolve

from .errors import EmptyConditional, InvalidInput, ParseError
from .grid import GridIndex, hit_mass, squared_distances

log = logging.getLogger(__name__)

BALL = "ball"
CUBE = "cube"
ATOMS = "atoms"
ATOMS_PLUS_GRID = "atoms+grid"
CENTER_POLICIES = (ATOMS, ATOMS_PLUS_GRID)

# Work limits for one certification scale; beyond them a cell-based upper
# bound replaces the exhaustive scan.
PAIR_BUDGET = 3_000_000_000
CELL_BUDGET = 20_000_000


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Probability measure on finitely many atoms of R^{n+1}.

    ``domain`` is ``"ball"`` (closed unit ball, the default for sources) or
    ``"cube"`` (the unit cube [0,1)^{n+1}, used for conditional measures).
    """

    points: np.ndarray
    weights: np.ndarray
    ambient_n: int
    domain: str = BALL
    uniform: bool = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.weights, dtype=float)
        if pts.ndim != 2 or len(pts) == 0:
            raise InvalidInput("a finite measure needs a nonempty (N, n+1) array of points")
        if pts.shape[1] != self.ambient_n + 1:
            raise InvalidInput(f"points have dimension {pts.shape[1]}, expected {self.ambient_n + 1}")
        if w.shape != (len(pts),):
            raise InvalidInput("weights must have one entry per point")
        if not np.all(np.isfinite(pts)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(pts), axis=1))[0])
            raise InvalidInput(f"point {bad} has non-finite coordinates")
        if np.any(w < 0) or not np.isfinite(w).all():
            raise InvalidInput("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInput(f"weights sum to {w.sum()!r}, expected 1")
        _check_domain(pts, self.domain)
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "uniform", bool(np.all(w == w[0])))

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.ambient_n + 1

    def mass_of(self, mask) -> float:
        """Mass of the atoms selected by a boolean mask (shared mass rule)."""
        return hit_mass(np.flatnonzero(mask), self.weights, self.uniform)


def _check_domain(pts, domain):
    if domain == BALL:
        norms = np.sqrt(squared_distances(pts, np.zeros(pts.shape[1])))
        out = np.flatnonzero(norms > 1.0 + 1e-12)
        if len(out):
            i = int(out[0])
            raise InvalidInput(f"point {i} {pts[i].tolist()} has norm {norms[i]:.6g} > 1 (outside the unit ball)")
    elif domain == CUBE:
        out = np.flatnonzero(np.any((pts < -1e-12) | (pts >= 1.0 + 1e-12), axis=1))
        if len(out):
            i = int(out[0])
            raise InvalidInput(f"point {i} {pts[i].tolist()} lies outside [0,1)^d")
    else:
        raise InvalidInput(f"unknown domain {domain!r}")


def uniform_on(points, domain: str = BALL) -> FiniteMeasure:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and pts.size:
        pts = pts[None, :]
    if pts.ndim != 2 or len(pts) == 0:
        raise InvalidInput("uniform_on needs a nonempty list of points")
    return FiniteMeasure(pts, np.full(len(pts), 1.0 / len(pts)), pts.shape[1] - 1, domain)


def ball_mass(mu: FiniteMeasure, center, radius: float) -> float:
    """Exhaustive closed-ball mass; the reference oracle."""
    if not radius > 0:
        raise InvalidInput("radius must be positive")
    center = np.asarray(center, dtype=float)
    hits = squared_distances(mu.points, center) <= radius * radius
    return mu.mass_of(hits)


def ball_masses(mu: FiniteMeasure, centers, radius: float, index: Optional[GridIndex] = None) -> np.ndarray:
    """Closed-ball masses around many centers through a grid index."""
    index = index or GridIndex(mu.points, radius)
    return index.masses(centers, mu.weights, mu.uniform, radius)


# --------------------------------------------------------------------------
# Frostman certification


@dataclass
class FrostmanCertificate:
    alpha: float
    c0: float
    delta0: float
    scale_maxima: List[Tuple[float, float]]
    passed: bool
    center_policy: str = ATOMS
    center_factor: float = 1.0
    cap: float = math.inf
    methods: List[str] = field(default_factory=list)
    lower_bounds: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "c0": self.c0,
            "delta0": self.delta0,
            "scales": [
                {"delta": d, "max_mass": m, "method": meth, "lower_bound": lo}
                for (d, m), meth, lo in zip(self.scale_maxima, self.methods, self.lower_bounds)
            ],
            "passed": self.passed,
            "center_policy": self.center_policy,
            "center_factor": self.center_factor,
            "cap": None if math.isinf(self.cap) else self.cap,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FrostmanCertificate":
        scales = d["scales"]
        return cls(
            alpha=d["alpha"],
            c0=d["c0"],
            delta0=d["delta0"],
            scale_maxima=[(s["delta"], s["max_mass"]) for s in scales],
            passed=d["passed"],
            center_policy=d["center_policy"],
            center_factor=d.get("center_factor", 1.0),
            cap=math.inf if d.get("cap") is None else d["cap"],
            methods=[s.get("method", "exact") for s in scales],
            lower_bounds=[s.get("lower_bound", s["max_mass"]) for s in scales],
        )


def dyadic_scales(delta0: float) -> List[float]:
    """1, 1/2, 1/4, ... down to the last power of two that is >= delta0."""
    out = []
    j = 0
    while 2.0**-j >= delta0 * (1 - 1e-12):
        out.append(2.0**-j)
        j += 1
    return out


def _grid_centers(points: np.ndarray, delta: float) -> np.ndarray:
    """Nodes of the delta/2 lattice adjacent to the node nearest each atom."""
    step = delta / 2.0
    base = np.unique(np.round(points / step).astype(np.int64), axis=0)
    offs = np.array(np.meshgrid(*[[-1, 0, 1]] * points.shape[1], indexing="ij")).reshape(points.shape[1], -1).T
    nodes = np.unique((base[:, None, :] + offs[None, :, :]).reshape(-1, points.shape[1]), axis=0)
    return nodes * step


def _cell_bound(mu: FiniteMeasure, delta: float, m: int):
    """Upper bound on sup over all w in R^d of mu(B(w, delta)), plus an atom lower bound.

    Masses are binned on cells of side s = delta/m. For w in cell c, the
    ball meets only cells c+o with sum_i (|o_i|-1)_+^2 < m^2, and contains
    every cell c+o with sum_i (|o_i|+1)^2 <= m^2 (cells are half-open).
    """
    d = mu.dim
    s = delta / m
    pad = m + 1
    lo = mu.points.min(axis=0)
    idx = np.floor((mu.points - lo) / s).astype(np.int64) + pad
    shape = tuple(int(v) for v in idx.max(axis=0) + pad + 1)
    grid = np.zeros(shape)
    vals = np.ones(mu.size) if mu.uniform else mu.weights
    np.add.at(grid, tuple(idx.T), vals)
    o = np.array(np.meshgrid(*[np.arange(-m, m + 1)] * d, indexing="ij"))
    outer = (np.maximum(np.abs(o) - 1, 0) ** 2).sum(axis=0) < m * m
    inner = ((np.abs(o) + 1) ** 2).sum(axis=0) <= m * m
    upper = fftconvolve(grid, outer.astype(float), mode="same")
    lower = fftconvolve(grid, inner.astype(float), mode="same")
    occupied = grid > 0
    if mu.uniform:
        up = float(np.rint(upper.max())) / mu.size
        low = float(np.rint(lower[occupied].max())) / mu.size
    else:
        up = min(1.0, float(upper.max()) + 1e-9)
        low = max(0.0, float(lower[occupied].max()) - 1e-9)
    return min(up, 1.0), low


def _choose_cell_ratio(mu: FiniteMeasure, delta: float, cell_budget: int) -> Optional[int]:
    extent = mu.points.max(axis=0) - mu.points.min(axis=0)
    for m in (32, 16, 8, 4):
        cells = np.prod(np.ceil(extent / (delta / m)) + 2 * m + 3)
        if cells <= cell_budget:
            return m
    return None


def scale_max_mass(
    mu: FiniteMeasure,
    delta: float,
    center_policy: str = ATOMS,
    pair_budget: int = PAIR_BUDGET,
    cell_budget: int = CELL_BUDGET,
):
    """Largest closed delta-ball mass at one scale: (max_mass, method, lower_bound)."""
    index = GridIndex(mu.points, delta)
    if index.pair_work() > pair_budget:
        m = _choose_cell_ratio(mu, delta, cell_budget)
        if m is not None:
            up, low = _cell_bound(mu, delta, m)
            return up, f"cell_bound(m={m})", low
    best = float(ball_masses(mu, mu.points, delta, index).max())
    if center_policy == ATOMS_PLUS_GRID:
        nodes = _grid_centers(mu.points, delta)
        best = max(best, float(ball_masses(mu, nodes, delta, index).max()))
    return best, "exact", best


def frostman_certify(
    mu: FiniteMeasure,
    alpha: float,
    delta0: float,
    center_policy: str = ATOMS,
    cap: float = math.inf,
    pair_budget: int = PAIR_BUDGET,
    cell_budget: int = CELL_BUDGET,
) -> FrostmanCertificate:
    """Least C0 >= 1 with max ball mass <= C0 delta^alpha at every dyadic scale in [delta0, 1].

    Exact scales take the maximum over the chosen centers. Since any ball
    B(w, delta) that meets the support sits inside B(a, 2 delta) for an atom a,
    the atom-centred constant controls all centers up to ``center_factor``.
    Scales marked ``cell_bound`` report an upper bound valid for every
    center in R^{n+1}.
    """
    if not alpha > 0:
        raise InvalidInput(f"alpha must be positive, got {alpha}")
    if not 0 < delta0 <= 1:
        raise InvalidInput(f"delta0 must lie in (0, 1], got {delta0}")
    if center_policy not in CENTER_POLICIES:
        raise InvalidInput(f"center_policy must be one of {CENTER_POLICIES}")
    scale_maxima, methods, lowers = [], [], []
    c0 = 1.0
    for delta in dyadic_scales(delta0):
        mx, method, low = scale_max_mass(mu, delta, center_policy, pair_budget, cell_budget)
        scale_maxima.append((delta, mx))
        methods.append(method)
        lowers.append(low)
        c0 = max(c0, mx / delta**alpha)
    if center_policy == ATOMS:
        factor = 2.0**alpha
    else:
        factor = min(2.0, 1.0 + math.sqrt(mu.dim) / 4.0) ** alpha
    return FrostmanCertificate(
        alpha=alpha,
        c0=c0,
        delta0=delta0,
        scale_maxima=scale_maxima,
        passed=c0 <= cap,
        center_policy=center_policy,
        center_factor=factor,
        cap=cap,
        methods=methods,
        lower_bounds=lowers,
    )


# --------------------------------------------------------------------------
# Dyadic cubes and conditional measures


@dataclass(frozen=True)
class DyadicCube:
    """The cube prod_i [n_i / 2^level, (n_i + 1) / 2^level)."""

    level: int
    corner: Tuple[int, ...]

    @property
    def side(self) -> float:
        return 2.0**-self.level

    def contains(self, pts) -> np.ndarray:
        idx = np.floor(np.asarray(pts, dtype=float) * 2**self.level).astype(np.int64)
        return np.all(idx == np.array(self.corner), axis=-1)

    def hom(self, pts) -> np.ndarray:
        """Homothety sending the cube onto [0,1)^d."""
        return (np.asarray(pts, dtype=float) - np.array(self.corner) * self.side) * 2**self.level

    def parent(self) -> "DyadicCube":
        return DyadicCube(self.level - 1, tuple(c // 2 for c in self.corner))


def to_unit_cube(mu: FiniteMeasure) -> np.ndarray:
    """Coordinates used by the dyadic machinery.

    Ball-domain measures are shifted by x -> (x + 1)/2; cube-domain measures
    are already in [0,1)^d.
    """
    if mu.domain == CUBE:
        return np.asarray(mu.points)
    return (mu.points + 1.0) / 2.0


def _cube_indices(shifted: np.ndarray, level: int) -> np.ndarray:
    idx = np.floor(shifted * 2**level).astype(np.int64)
    # a coordinate equal to 1 (on the closing face) belongs to the last cube
    return np.clip(idx, 0, 2**level - 1)


def dyadic_decompose(mu: FiniteMeasure, level: int) -> List[Tuple[DyadicCube, float]]:
    """Positive-mass dyadic cubes at ``level`` with their masses, sorted by corner."""
    if int(level) != level or level < 0:
        raise InvalidInput("level must be a nonnegative integer")
    idx = _cube_indices(to_unit_cube(mu), level)
    cubes, inverse = np.unique(idx, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    out = []
    for j, corner in enumerate(cubes):
        out.append((DyadicCube(int(level), tuple(int(c) for c in corner)), mu.mass_of(inverse == j)))
    return out


def conditional(mu: FiniteMeasure, q: DyadicCube) -> FiniteMeasure:
    """Normalised restriction of mu to q, pushed to [0,1)^d by the cube's homothety."""
    idx = _cube_indices(to_unit_cube(mu), q.level)
    inside = np.all(idx == np.array(q.corner), axis=1)
    total = mu.mass_of(inside)
    if not total > 0:
        raise EmptyConditional(f"cube {q} carries no mass")
    pts = q.hom(to_unit_cube(mu)[inside])
    # atoms on the closing face of the last cube land exactly on 1
    pts = np.minimum(pts, np.nextafter(1.0, 0.0))
    w = mu.weights[inside]
    if mu.uniform:
        weights = np.full(len(pts), 1.0 / len(pts))
    else:
        weights = w / w.sum()
    return FiniteMeasure(pts, weights, mu.ambient_n, CUBE)


# --------------------------------------------------------------------------
# CSV point clouds


def write_csv(mu: FiniteMeasure, path, with_weights: Optional[bool] = None) -> None:
    """Header x1..x{n+1}[,weight]; uniform measures omit the weight column by default."""
    with_weights = (not mu.uniform) if with_weights is None else with_weights
    header = [f"x{i}" for i in range(1, mu.dim + 1)] + (["weight"] if with_weights else [])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, p in enumerate(mu.points):
            row = [repr(float(v)) for v in p]
            if with_weights:
                row.append(repr(float(mu.weights[i])))
            writer.writerow(row)


def read_csv(path, expected_n: Optional[int] = None) -> FiniteMeasure:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        has_w = bool(header) and header[-1] == "weight"
        coords = header[:-1] if has_w else header
        d = len(coords)
        if d == 0 or coords != [f"x{i}" for i in range(1, d + 1)]:
            raise ParseError(f"header must be x1,...,x{{n+1}}[,weight], got {','.join(header)}", line=1)
        if expected_n is not None and d != expected_n + 1:
            raise ParseError(f"header declares {d} coordinates, expected {expected_n + 1}", line=1)
        width = d + (1 if has_w else 0)
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise ParseError(f"expected {width} fields, got {len(row)}", line=line)
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
    if not rows:
        raise ParseError("no data rows", line=2)
    arr = np.array(rows)
    pts = arr[:, :d]
    if not has_w:
        return uniform_on(pts)
    w = arr[:, d]
    total = w.sum()
    if not total > 0:
        raise InvalidInput("weight column sums to zero")
    if abs(total - 1.0) > 1e-9:
        log.warning("weights in %s sum to %r; renormalising to 1", path, total)
    return FiniteMeasure(pts, w / total, d - 1)


def read_certificate(path) -> FrostmanCertificate:
    with open(path) as fh:
        return FrostmanCertificate.from_dict(json.load(fh))
