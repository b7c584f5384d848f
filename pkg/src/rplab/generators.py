"""Test-set constructions with prescribed Frostman exponents, and point-cloud ingestion.

Every construction is built in a unit cube centred at the origin and then
scaled by 1/sqrt(n+1) so that it fits in the closed unit ball.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, InvalidInput
from .measures import FiniteMeasure, frostman_certify, read_csv, uniform_on, write_csv
from .rep_core import _check_n, kernel_direction

log = logging.getLogger(__name__)

MAX_POINTS = 50_000_000


def _lattice_steps(delta0: float) -> int:
    if not 0 < delta0 <= 1:
        raise InvalidInput(f"delta0 must lie in (0, 1], got {delta0}")
    return int(math.floor(1.0 / delta0 + 1e-9))


@dataclass(frozen=True)
class Grid:
    """delta0-lattice of [-1/2, 1/2]^{n+1}."""

    n: int
    delta0: float


@dataclass(frozen=True)
class CantorProduct:
    """Product of per-axis digit-set Cantor sets, ``axes`` = ((base, digits), ...) one per coordinate."""

    n: int
    axes: Tuple[Tuple[int, Tuple[int, ...]], ...]
    depth: int

    @property
    def alpha(self) -> float:
        return sum(math.log(len(d)) / math.log(b) for b, d in self.axes)


@dataclass(frozen=True)
class Segment:
    """delta0-spaced points on the segment through the origin along ``direction``."""

    n: int
    direction: Tuple[float, ...]
    delta0: float


@dataclass(frozen=True)
class KernelLine:
    """delta0-spaced points on the line through ``basepoint`` along kernel_direction(n, k, r_star)."""

    n: int
    k: int
    r_star: float
    delta0: float
    basepoint: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class SeededRandom:
    """Random dyadic Cantor tree with about 2^alpha_target children per cube, certified after sampling."""

    n: int
    count: int
    alpha_target: float
    seed: int = 0


GeneratorSpec = Union[Grid, CantorProduct, Segment, KernelLine, SeededRandom]

_PRESETS = {
    "grid": Grid,
    "cantor": CantorProduct,
    "segment": Segment,
    "kernel-line": KernelLine,
    "random": SeededRandom,
}
_PRESET_NAME = {v: k for k, v in _PRESETS.items()}


def spec_to_dict(spec: GeneratorSpec) -> dict:
    d = asdict(spec)
    if isinstance(spec, CantorProduct):
        d["axes"] = [[b, list(digits)] for b, digits in spec.axes]
    for key in ("direction", "basepoint"):
        if d.get(key) is not None:
            d[key] = list(d[key])
    if isinstance(spec, KernelLine) and spec.basepoint is None:
        del d["basepoint"]
    return {"preset": _PRESET_NAME[type(spec)], **d}


def spec_from_dict(d: dict) -> GeneratorSpec:
    d = dict(d)
    preset = d.pop("preset", None)
    if preset not in _PRESETS:
        raise ConfigError(f"source.preset must be one of {sorted(_PRESETS)}, got {preset!r}")
    cls = _PRESETS[preset]
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys for preset {preset!r}: {sorted(unknown)}")
    try:
        if cls is CantorProduct:
            d["axes"] = tuple((int(b), tuple(int(x) for x in digits)) for b, digits in d["axes"])
        for key in ("direction", "basepoint"):
            if d.get(key) is not None:
                d[key] = tuple(float(x) for x in d[key])
        spec = cls(**d)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid {preset!r} source: {exc}") from None
    validate(spec)
    return spec


def validate(spec: GeneratorSpec) -> None:
    _check_n(spec.n)
    if isinstance(spec, (Grid, Segment, KernelLine)):
        _lattice_steps(spec.delta0)
    if isinstance(spec, CantorProduct):
        if len(spec.axes) != spec.n + 1:
            raise InvalidInput(f"axes: need {spec.n + 1} digit sets, got {len(spec.axes)}")
        for i, (b, digits) in enumerate(spec.axes):
            if b < 2:
                raise InvalidInput(f"axes[{i}]: base must be >= 2, got {b}")
            if not 1 <= len(set(digits)) < b or len(set(digits)) != len(digits):
                raise InvalidInput(f"axes[{i}]: digit set {list(digits)} must have 1..{b - 1} distinct digits")
            if any(not 0 <= x < b for x in digits):
                raise InvalidInput(f"axes[{i}]: digits {list(digits)} must lie in 0..{b - 1}")
        if spec.depth < 0:
            raise InvalidInput("depth must be >= 0")
        total = math.prod(len(d) ** spec.depth for _, d in spec.axes)
        if total > MAX_POINTS:
            raise InvalidInput(f"depth {spec.depth} would produce {total} points")
    if isinstance(spec, Segment):
        if len(spec.direction) != spec.n + 1 or not np.linalg.norm(spec.direction) > 0:
            raise InvalidInput(f"direction must be a nonzero vector of length {spec.n + 1}")
    if isinstance(spec, KernelLine):
        if not 1 <= spec.k <= spec.n:
            raise InvalidInput(f"k must lie in 1..{spec.n}")
        if not 0 <= spec.r_star <= 1:
            raise InvalidInput("r_star must lie in [0, 1]")
        if spec.basepoint is not None and len(spec.basepoint) != spec.n + 1:
            raise InvalidInput(f"basepoint must have length {spec.n + 1}")
    if isinstance(spec, SeededRandom):
        if spec.count < 1:
            raise InvalidInput("count must be >= 1")
        if not 0 < spec.alpha_target <= spec.n + 1:
            raise InvalidInput(f"alpha_target must lie in (0, {spec.n + 1}]")
    if isinstance(spec, Grid):
        total = (_lattice_steps(spec.delta0) + 1) ** (spec.n + 1)
        if total > MAX_POINTS:
            raise InvalidInput(f"delta0 {spec.delta0} would produce {total} points")


def natural_delta0(spec: GeneratorSpec) -> float:
    """Finest scale at which the construction is designed to be Frostman."""
    if isinstance(spec, (Grid, Segment, KernelLine)):
        return spec.delta0
    if isinstance(spec, CantorProduct):
        res = [b ** -spec.depth for b, d in spec.axes if len(d) > 1]
        return max(res) if res else 1.0
    return 2.0 ** -_random_depth(spec)


def designed_alpha(spec: GeneratorSpec) -> float:
    if isinstance(spec, Grid):
        return spec.n + 1.0
    if isinstance(spec, (Segment, KernelLine)):
        return 1.0
    if isinstance(spec, CantorProduct):
        return spec.alpha
    return spec.alpha_target


def _axis_values(base: int, digits: Sequence[int], depth: int) -> np.ndarray:
    vals = np.zeros(1, dtype=np.int64)
    for _ in range(depth):
        vals = (vals[:, None] * base + np.asarray(digits, dtype=np.int64)[None, :]).ravel()
    x = vals / float(base) ** depth
    return x - (min(digits) + max(digits)) / (2.0 * (base - 1))


def _line(direction, delta0, basepoint=None) -> np.ndarray:
    steps = _lattice_steps(delta0)
    s = -0.5 + np.arange(steps + 1) * delta0
    v = np.asarray(direction, dtype=float)
    v = v / np.linalg.norm(v)
    base = np.zeros(len(v)) if basepoint is None else np.asarray(basepoint, dtype=float)
    return base[None, :] + s[:, None] * v[None, :]


def _random_depth(spec: SeededRandom) -> int:
    return max(1, math.ceil(math.log2(max(spec.count, 2)) / spec.alpha_target))


def _random_tree(spec: SeededRandom, seed: int) -> np.ndarray:
    d = spec.n + 1
    rng = np.random.default_rng(seed)
    children = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
    target = 2.0**spec.alpha_target
    lo = int(math.floor(target))
    frac = target - lo
    depth = _random_depth(spec)
    cubes = np.zeros((1, d), dtype=np.int64)
    for _ in range(depth):
        keep = lo + (rng.random(len(cubes)) < frac)
        keep = np.clip(keep, 1, 2**d)
        ranks = np.argsort(np.argsort(rng.random((len(cubes), 2**d)), axis=1), axis=1)
        mask = ranks < keep[:, None]
        parent, child = np.nonzero(mask)
        cubes = cubes[parent] * 2 + children[child]
    if len(cubes) > spec.count:
        cubes = cubes[np.sort(rng.choice(len(cubes), size=spec.count, replace=False))]
    return (cubes + 0.5) / 2.0**depth - 0.5


def generate(spec: GeneratorSpec, certify_cap: Optional[float] = None, attempts: int = 10) -> FiniteMeasure:
    validate(spec)
    d = spec.n + 1
    if isinstance(spec, Grid):
        g = -0.5 + np.arange(_lattice_steps(spec.delta0) + 1) * spec.delta0
        pts = np.stack(np.meshgrid(*[g] * d, indexing="ij"), axis=-1).reshape(-1, d)
    elif isinstance(spec, CantorProduct):
        axes = [_axis_values(b, digits, spec.depth) for b, digits in spec.axes]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    elif isinstance(spec, Segment):
        pts = _line(spec.direction, spec.delta0)
    elif isinstance(spec, KernelLine):
        pts = _line(kernel_direction(spec.n, spec.k, spec.r_star), spec.delta0, spec.basepoint)
    else:
        cap = 2.0 ** (2 * d) if certify_cap is None else certify_cap
        delta0 = natural_delta0(spec)
        for attempt in range(attempts):
            pts = _random_tree(spec, spec.seed + attempt)
            mu = uniform_on(pts / math.sqrt(d))
            cert = frostman_certify(mu, spec.alpha_target, delta0, cap=cap)
            if cert.passed:
                if attempt:
                    log.info("random source certified on attempt %d (seed %d)", attempt + 1, spec.seed + attempt)
                return mu
            log.info("random source seed %d rejected: C0 = %.3g > %.3g", spec.seed + attempt, cert.c0, cap)
        raise InvalidInput(f"no certified random set (alpha={spec.alpha_target}, cap={cap}) after {attempts} seeds")
    return uniform_on(pts / math.sqrt(d))


def ingest(path, expected_n: Optional[int] = None) -> FiniteMeasure:
    return read_csv(path, expected_n)


def export(mu: FiniteMeasure, path) -> None:
    write_csv(mu, path)
