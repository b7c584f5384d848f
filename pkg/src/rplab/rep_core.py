"""Moment-curve frames, the SL2(R) symmetric-power action and the projection families.

Everything here is a pure function of its arguments. Vectors live in
R^{n+1} with the basis in which u_r acts through the derivative frame of
the moment curve xi(r) = (r/1!, ..., r^{n+1}/(n+1)!) and a_t acts
diagonally with weights (n - 2i) t / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EmptyKernel, InvalidDimension, InvalidInput, InvalidOrder, OutOfRange


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise InvalidDimension(f"ambient parameter n must be an integer >= 1, got {n!r}")


def xi(n: int, r: float) -> np.ndarray:
    """Moment curve point; component j (1-based) is r**j / j!."""
    _check_n(n)
    return np.array([r**j / math.factorial(j) for j in range(1, n + 2)], dtype=float)


def xi_derivative(n: int, k: int, r: float) -> np.ndarray:
    """k-th derivative of the moment curve: component j is r**(j-k)/(j-k)! for j >= k."""
    _check_n(n)
    if int(k) != k or not 1 <= k <= n + 1:
        raise InvalidOrder(f"derivative order k must lie in 1..{n + 1}, got {k!r}")
    out = np.zeros(n + 1)
    for j in range(k, n + 2):
        # 0.0 ** 0 == 1.0, so the leading entry is exactly one for every r
        out[j - 1] = r ** (j - k) / math.factorial(j - k)
    return out


def u_matrix(n: int, r: float) -> np.ndarray:
    """Action of the unipotent u_r; row i is the i-th derivative of xi at r."""
    _check_n(n)
    return np.vstack([xi_derivative(n, i, r) for i in range(1, n + 2)])


def a_matrix(n: int, t: float) -> np.ndarray:
    """Diagonal action of a_t with entries exp((n - 2(i-1)) t / 2)."""
    _check_n(n)
    return np.diag([math.exp((n - 2 * i) * t / 2.0) for i in range(n + 1)])


def _frame(n: int, k: int, r: float) -> np.ndarray:
    if k == 0:
        return np.zeros((0, n + 1))
    return np.vstack([xi_derivative(n, i, r) for i in range(1, k + 1)])


@dataclass(frozen=True)
class PiTR:
    """The expanded planar projection of R^3: (e^t(x + r y + r^2 z/2), y + r z)."""

    t: float
    r: float

    def __post_init__(self):
        if not self.t >= 0:
            raise OutOfRange(f"t must be >= 0, got {self.t}")
        if not 0.0 <= self.r <= 1.0:
            raise OutOfRange(f"r must lie in [0, 1], got {self.r}")

    @property
    def ambient_dim(self) -> int:
        return 3

    @property
    def image_dim(self) -> int:
        return 2

    def matrix(self) -> np.ndarray:
        et = math.exp(self.t)
        r = self.r
        return np.array([[et, et * r, et * r * r / 2.0], [0.0, 1.0, r]])


@dataclass(frozen=True)
class PK:
    """Projection onto the first k derivative directions of the moment curve in R^{n+1}."""

    n: int
    k: int
    r: float

    def __post_init__(self):
        _check_n(self.n)
        if int(self.k) != self.k or not 0 <= self.k <= self.n + 1:
            raise InvalidOrder(f"k must lie in 0..{self.n + 1}, got {self.k!r}")
        if not 0.0 <= self.r <= 1.0:
            raise OutOfRange(f"r must lie in [0, 1], got {self.r}")

    @property
    def ambient_dim(self) -> int:
        return self.n + 1

    @property
    def image_dim(self) -> int:
        return self.k

    def matrix(self) -> np.ndarray:
        return _frame(self.n, self.k, self.r)


@dataclass(frozen=True)
class RepPush:
    """The push w -> a_t u_r w in the (n+1)-dimensional irreducible representation."""

    n: int
    t: float
    r: float

    def __post_init__(self):
        _check_n(self.n)
        if not self.t >= 0:
            raise OutOfRange(f"t must be >= 0, got {self.t}")
        if not 0.0 <= self.r <= 1.0:
            raise OutOfRange(f"r must lie in [0, 1], got {self.r}")

    @property
    def ambient_dim(self) -> int:
        return self.n + 1

    @property
    def image_dim(self) -> int:
        return self.n + 1

    def matrix(self) -> np.ndarray:
        return a_matrix(self.n, self.t) @ u_matrix(self.n, self.r)


ProjectionSpec = Union[PiTR, PK, RepPush]


def spec_to_dict(spec: ProjectionSpec) -> dict:
    if isinstance(spec, PiTR):
        return {"family": "PiTR", "t": spec.t, "r": spec.r}
    if isinstance(spec, PK):
        return {"family": "PK", "n": spec.n, "k": spec.k, "r": spec.r}
    return {"family": "RepPush", "n": spec.n, "t": spec.t, "r": spec.r}


def linear_image(matrix: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a linear map row by row with a fixed summation order.

    Avoids BLAS so that a single vector and a batch containing it produce
    bit-identical images; exact tie handling in the counting code relies on it.
    """
    points = np.asarray(points, dtype=float)
    k, d = matrix.shape
    if points.shape[-1] != d:
        raise InvalidInput(f"expected vectors of length {d}, got {points.shape[-1]}")
    out = np.empty(points.shape[:-1] + (k,))
    for i in range(k):
        acc = matrix[i, 0] * points[..., 0]
        for j in range(1, d):
            acc = acc + matrix[i, j] * points[..., j]
        out[..., i] = acc
    return out


def proj_k(spec: PK, w) -> np.ndarray:
    """(w . xi'(r), ..., w . xi^(k)(r)); the empty vector when k = 0."""
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.n + 1,):
        raise InvalidInput(f"w must have length {spec.n + 1}, got shape {w.shape}")
    return linear_image(spec.matrix(), w)


def apply(spec: ProjectionSpec, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.ambient_dim,):
        raise InvalidInput(
            f"{type(spec).__name__} acts on vectors of length {spec.ambient_dim}, got shape {w.shape}"
        )
    return linear_image(spec.matrix(), w)


def apply_many(spec: ProjectionSpec, points) -> np.ndarray:
    """Vectorised `apply` over an (N, d) array of points."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != spec.ambient_dim:
        raise InvalidInput(
            f"{type(spec).__name__} acts on (N, {spec.ambient_dim}) arrays, got shape {points.shape}"
        )
    return linear_image(spec.matrix(), points)


def varpi(n: int, alpha: float) -> float:
    """Dimension-gain exponent max{n a - k(k+1), k(2n - k + 1) - n a} with k = floor(a)."""
    _check_n(n)
    if not 0.0 < alpha < n + 1:
        raise OutOfRange(f"alpha must lie in (0, {n + 1}), got {alpha}")
    k = math.floor(alpha)
    return max(n * alpha - k * (k + 1), k * (2 * n - k + 1) - n * alpha)


def kernel_direction(n: int, k: int, r: float) -> np.ndarray:
    """Unit vector annihilated by xi'(r), ..., xi^(k)(r).

    The k x (n+1) frame is already in echelon form with unit pivots in the
    first k columns; the returned vector is the null-space basis element for
    the first free column (k+1), solved by back substitution, normalised and
    with that free coordinate positive.
    """
    _check_n(n)
    if k == n + 1:
        raise EmptyKernel(f"the full frame of {n + 1} derivatives has trivial kernel")
    if int(k) != k or not 1 <= k <= n:
        raise InvalidOrder(f"k must lie in 1..{n}, got {k!r}")
    frame = _frame(n, k, r)
    v = np.zeros(n + 1)
    v[k] = 1.0
    for i in range(k - 1, -1, -1):
        v[i] = -float(frame[i, i + 1 :] @ v[i + 1 :])
    return v / np.linalg.norm(v)
