"""Concentration functionals of a measure under a projection.

m^delta(w) is the mass of the atoms whose image lies within delta of the
image of w. Every functional has an exhaustive-scan form; the profile
routines go through a GridIndex in image space and agree with the scan
exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import InvalidInput
from .grid import GridIndex, brute_masses, cell_coords, squared_distances
from .measures import FiniteMeasure
from .rep_core import PK, ProjectionSpec, apply, apply_many, spec_to_dict


@dataclass(frozen=True)
class All:
    pass


@dataclass(frozen=True)
class RandomK:
    k: int
    seed: int = 0


SamplePolicy = Union[All, RandomK]


def parse_sample_policy(text: str) -> SamplePolicy:
    """'all' or 'random:K[:SEED]'."""
    text = text.strip().lower()
    if text == "all":
        return All()
    parts = text.split(":")
    if parts[0] == "random" and len(parts) in (2, 3):
        try:
            return RandomK(int(parts[1]), int(parts[2]) if len(parts) == 3 else 0)
        except ValueError:
            pass
    raise InvalidInput(f"sample policy must be 'all' or 'random:K[:SEED]', got {text!r}")


def sample_indices(n_atoms: int, policy: SamplePolicy, rng_seed=None) -> np.ndarray:
    if isinstance(policy, All):
        return np.arange(n_atoms)
    if policy.k <= 0:
        raise InvalidInput("empty sample")
    if policy.k >= n_atoms:
        return np.arange(n_atoms)
    seed = policy.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_atoms, size=policy.k, replace=False))


def _check_delta(delta):
    if not delta > 0:
        raise InvalidInput(f"delta must be positive, got {delta}")


def concentration_at(mu: FiniteMeasure, spec: ProjectionSpec, w, delta: float) -> float:
    """Exhaustive-scan m^delta at an arbitrary point w."""
    _check_delta(delta)
    images = apply_many(spec, mu.points)
    q = apply(spec, w)
    if images.shape[1] == 0:
        return mu.mass_of(np.ones(mu.size, dtype=bool))
    return mu.mass_of(squared_distances(images, q) <= delta * delta)


def concentration_values(
    mu: FiniteMeasure,
    spec: ProjectionSpec,
    delta: float,
    query_idx=None,
    active=None,
    images: Optional[np.ndarray] = None,
    method: str = "grid",
) -> np.ndarray:
    """m^delta at the atoms in ``query_idx``, counting only ``active`` atoms.

    ``method`` is ``"grid"`` (accelerated) or ``"brute"`` (O(N^2) oracle).
    """
    _check_delta(delta)
    if images is None:
        images = apply_many(spec, mu.points)
    query_idx = np.arange(mu.size) if query_idx is None else np.asarray(query_idx)
    if method == "brute":
        return brute_masses(images, delta, mu.weights, mu.uniform, images[query_idx], active)
    ids = np.arange(mu.size) if active is None else np.flatnonzero(active)
    index = GridIndex(images[ids], delta, ids=ids)
    return index.masses(images[query_idx], mu.weights, mu.uniform, delta)


@dataclass
class ConcentrationProfile:
    spec: ProjectionSpec
    delta: float
    sample: np.ndarray
    values: np.ndarray
    quantiles: dict

    def write(self, csv_path, json_path=None) -> None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["point_index", "m_delta"])
            for i, v in zip(self.sample, self.values):
                writer.writerow([int(i), repr(float(v))])
        if json_path is not None:
            with open(json_path, "w") as fh:
                json.dump(
                    {"spec": spec_to_dict(self.spec), "delta": self.delta, "quantiles": self.quantiles},
                    fh,
                    indent=2,
                    sort_keys=True,
                )


def summarize(values) -> dict:
    values = np.asarray(values, dtype=float)
    return {
        "median": float(np.quantile(values, 0.5)),
        "p90": float(np.quantile(values, 0.9)),
        "p99": float(np.quantile(values, 0.99)),
        "max": float(values.max()),
    }


def concentration_profile(
    mu: FiniteMeasure, spec: ProjectionSpec, delta: float, sample_policy: SamplePolicy = All()
) -> ConcentrationProfile:
    sample = sample_indices(mu.size, sample_policy)
    if len(sample) == 0:
        raise InvalidInput("empty sample")
    values = concentration_values(mu, spec, delta, query_idx=sample)
    return ConcentrationProfile(spec, float(delta), sample, values, summarize(values))


def annulus_concentration(mu: FiniteMeasure, spec: ProjectionSpec, w, delta: float, b: float) -> float:
    """Mass of {w' : b <= |w - w'| <= 2b and |image(w) - image(w')| <= delta}."""
    _check_delta(delta)
    if not b > 0:
        raise InvalidInput("annulus radius b must be positive")
    w = np.asarray(w, dtype=float)
    dist2 = squared_distances(mu.points, w)
    in_shell = (dist2 >= b * b) & (dist2 <= 4 * b * b)
    images = apply_many(spec, mu.points)
    near = squared_distances(images, apply(spec, w)) <= delta * delta if images.shape[1] else True
    return mu.mass_of(in_shell & near)


def slab_mass(sigma: FiniteMeasure, r: float, b: float, z) -> float:
    """sigma-mass of the slab {z' : |(1, r, r^2/2) . (z - z')| <= b} in R^3."""
    if sigma.dim != 3:
        raise InvalidInput(f"slab_mass needs an ambient dimension of 3, got {sigma.dim}")
    if not b > 0:
        raise InvalidInput("slab width b must be positive")
    z = np.asarray(z, dtype=float)
    diff = z - sigma.points
    val = diff[:, 0] + r * diff[:, 1] + (r * r / 2.0) * diff[:, 2]
    return sigma.mass_of(np.abs(val) <= b)


def tube_cover_count(mu: FiniteMeasure, n: int, k: int, r: float, delta: float, mass_floor: float = 0.0) -> int:
    """Number of cells of the delta-grid in the image of p_r^(k) carrying mass >= mass_floor.

    Cells are the half-open boxes prod [j_i delta, (j_i + 1) delta); empty
    cells are never counted.
    """
    _check_delta(delta)
    if not 1 <= k <= n + 1:
        raise InvalidInput(f"k must lie in 1..{n + 1}")
    images = apply_many(PK(n, k, r), mu.points)
    cells = cell_coords(images, delta)
    _, inverse = np.unique(cells, axis=0, return_inverse=True)
    masses = np.bincount(inverse.ravel(), weights=mu.weights)
    return int(np.count_nonzero(masses >= mass_floor))
