# measure_core.py
# ----------------
# Finitely supported measures in R^d and functions defined on their support.
#
# A DiscreteMeasure is the computational stand-in for a Radon measure with the
# growth condition mu(B(x, r)) <= C0 * r^n. The model is only meaningful at
# scales r >= r_min: point masses always violate the growth condition as
# r -> 0, so the growth constant is certified for r >= r_min only and every
# cube handed to the toolkit must have side >= r_min.
#
# Inputs:
# - points (array, N x d), masses (array, N), r_min (float)
#
# Outputs:
# - closed ball / closed cube masses, means, growth constant, support diameter
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from parallel_sweeps import ordered_map

logger = logging.getLogger(__name__)

# relative inflation of the tree search radius; the exact test is done afterwards
_TREE_SLACK = 1e-9


class EmptySupport(ValueError):
    """Raised when an operation needs at least one support point."""


class EmptyCube(ValueError):
    """Raised when a mean or median is requested on a cube of zero mass."""


class NotInSupport(ValueError):
    """Raised when a pointwise operator is evaluated away from the support."""


class ResolutionError(ValueError):
    """Raised when a cube or truncation is finer than the measure resolution r_min."""


@dataclass(frozen=True)
class Cube:
    """Closed axis-parallel cube given by its center and side length."""

    center: tuple
    side: float

    def __post_init__(self):
        center = tuple(float(c) for c in np.atleast_1d(np.asarray(self.center, dtype=float)))
        side = float(self.side)
        if not side > 0 or not np.isfinite(side):
            raise ValueError(f"Cube side must be a positive real, got {self.side}.")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "side", side)

    @property
    def dim(self) -> int:
        return len(self.center)

    def dilate(self, s: float) -> "Cube":
        """Concentric cube with side multiplied by s."""
        return Cube(self.center, s * self.side)

    def contains_point(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return bool(np.max(np.abs(x - np.asarray(self.center))) <= 0.5 * self.side)

    def contains(self, other: "Cube", tol: float = 1e-12) -> bool:
        """True when `other` lies inside this cube (per-coordinate intervals)."""
        gap = np.abs(np.asarray(other.center) - np.asarray(self.center)) + 0.5 * other.side
        return bool(np.all(gap <= 0.5 * self.side * (1.0 + tol)))

    def to_dict(self) -> dict:
        return {"center": list(self.center), "side": self.side}


class DiscreteMeasure:
    """
    Weighted point set with a resolution scale.

    Parameters:
    - points (array-like, N x d or N): support points, pairwise distinct
    - masses (array-like, N): strictly positive masses
    - r_min (float): resolution scale, > 0

    The arrays are stored read-only; a measure never changes after
    construction and can be shared between worker threads.
    """

    def __init__(self, points, masses, r_min: float):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise ValueError(f"points must be an N x d array, got shape {pts.shape}.")
        m = np.asarray(masses, dtype=float).reshape(-1)
        if m.shape[0] != pts.shape[0]:
            raise ValueError(f"masses has {m.shape[0]} entries but there are {pts.shape[0]} points.")
        if np.any(~np.isfinite(pts)) or np.any(~np.isfinite(m)):
            raise ValueError("points and masses must be finite.")
        if np.any(m <= 0):
            raise ValueError("masses must be strictly positive.")
        if not float(r_min) > 0:
            raise ValueError(f"r_min must be positive, got {r_min}.")
        if pts.shape[0] and np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValueError("points must be pairwise distinct.")

        pts = np.ascontiguousarray(pts)
        m = np.ascontiguousarray(m)
        pts.setflags(write=False)
        m.setflags(write=False)
        self._points = pts
        self._masses = m
        self._r_min = float(r_min)
        self._tree = cKDTree(pts) if pts.shape[0] else None
        self._diameter = None

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def masses(self) -> np.ndarray:
        return self._masses

    @property
    def r_min(self) -> float:
        return self._r_min

    @property
    def d(self) -> int:
        return self._points.shape[1]

    @property
    def size(self) -> int:
        return self._points.shape[0]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self._masses))

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"DiscreteMeasure(N={self.size}, d={self.d}, r_min={self._r_min:g}, mass={self.total_mass:g})"

    # ----- index queries -------------------------------------------------

    def ball_indices(self, x, r: float) -> np.ndarray:
        """Sorted indices of the support points in the closed Euclidean ball B(x, r)."""
        x = self._as_point(x)
        if self._tree is None:
            return np.empty(0, dtype=np.intp)
        cand = self._tree.query_ball_point(x, r * (1.0 + _TREE_SLACK) + 1e-300, p=2.0)
        cand = np.sort(np.asarray(cand, dtype=np.intp))
        dist = np.sqrt(np.sum((self._points[cand] - x) ** 2, axis=1))
        return cand[dist <= r]

    def cube_indices(self, cube: Cube) -> np.ndarray:
        """Sorted indices of the support points in the closed cube."""
        c = self._as_point(cube.center)
        half = 0.5 * cube.side
        if self._tree is None:
            return np.empty(0, dtype=np.intp)
        cand = self._tree.query_ball_point(c, half * (1.0 + _TREE_SLACK) + 1e-300, p=np.inf)
        cand = np.sort(np.asarray(cand, dtype=np.intp))
        cheb = np.max(np.abs(self._points[cand] - c), axis=1) if cand.size else np.empty(0)
        return cand[cheb <= half]

    def chebyshev_distances(self, x) -> np.ndarray:
        """max_i |y_i - x_i| for every support point y (cube membership radius)."""
        x = self._as_point(x)
        return np.max(np.abs(self._points - x), axis=1)

    def euclidean_distances(self, x) -> np.ndarray:
        x = self._as_point(x)
        return np.sqrt(np.sum((self._points - x) ** 2, axis=1))

    def index_of(self, x) -> int:
        """Index of the support point equal to x; NotInSupport otherwise."""
        x = self._as_point(x)
        if self._tree is not None:
            dist, idx = self._tree.query(x, k=1)
            if np.array_equal(self._points[idx], x):
                return int(idx)
        raise NotInSupport(f"point {tuple(x)} is not a support point of {self!r}.")

    def nearest_index(self, x) -> int:
        if self._tree is None:
            raise EmptySupport("measure has no support points.")
        return int(self._tree.query(self._as_point(x), k=1)[1])

    def _as_point(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.d,):
            raise ValueError(f"expected a point in R^{self.d}, got shape {x.shape}.")
        return x

    # ----- serialization ---------------------------------------------------

    def to_dict(self, n: int | None = None) -> dict:
        out = {
            "d": self.d,
            "r_min": self._r_min,
            "points": self._points.tolist(),
            "masses": self._masses.tolist(),
        }
        if n is not None:
            out["n"] = int(n)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        try:
            points = np.asarray(data["points"], dtype=float)
            d = int(data.get("d", points.shape[1] if points.ndim == 2 else 1))
            mu = cls(points.reshape(-1, d) if points.size else np.empty((0, d)), data["masses"], data["r_min"])
        except KeyError as e:
            raise KeyError(f"Measure description is missing the {e.args[0]!r} key.") from e
        return mu


@dataclass(eq=False)
class FunctionOnSupport:
    """One real (or complex) value per support point of a measure."""

    values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        v = np.asarray(self.values)
        if not (np.issubdtype(v.dtype, np.floating) or np.issubdtype(v.dtype, np.complexfloating)):
            v = v.astype(float)
        self.values = np.ascontiguousarray(v.reshape(-1))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def __len__(self):
        return self.values.shape[0]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self) else 0.0

    def to_dict(self) -> dict:
        if self.is_complex:
            return {"re": self.values.real.tolist(), "im": self.values.imag.tolist()}
        return {"values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "FunctionOnSupport":
        if "values" in data:
            return cls(np.asarray(data["values"], dtype=float))
        if "re" in data and "im" in data:
            return cls(np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float))
        raise KeyError("Function description needs either 'values' or both 're' and 'im'.")


def function_values(mu: DiscreteMeasure, f) -> np.ndarray:
    """Value array of f, checked against the number of support points of mu."""
    v = f.values if isinstance(f, FunctionOnSupport) else np.asarray(f)
    if v.shape != (mu.size,):
        raise ValueError(f"function has {v.shape[0] if v.ndim else 0} values, measure has {mu.size} points.")
    return v


def load_measure(path: str) -> tuple[DiscreteMeasure, int | None]:
    """Read a measure JSON file; returns the measure and its growth exponent n if present."""
    with open(path, "r") as file:
        data = json.load(file)
    return DiscreteMeasure.from_dict(data), data.get("n")


def load_function(path: str, mu: DiscreteMeasure) -> FunctionOnSupport:
    with open(path, "r") as file:
        f = FunctionOnSupport.from_dict(json.load(file))
    function_values(mu, f)
    return f


# ----- operations --------------------------------------------------------


def ball_mass(mu: DiscreteMeasure, x, r: float) -> float:
    """Mass of the closed ball B(x, r)."""
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}.")
    return float(np.sum(mu.masses[mu.ball_indices(x, r)]))


def check_resolution(mu: DiscreteMeasure, cube: Cube) -> None:
    if cube.side < mu.r_min * (1.0 - 1e-12):
        raise ResolutionError(f"cube side {cube.side:g} is below the resolution r_min={mu.r_min:g}.")


def cube_mass(mu: DiscreteMeasure, cube: Cube) -> float:
    """Mass of the closed cube; cubes below r_min are rejected."""
    check_resolution(mu, cube)
    return float(np.sum(mu.masses[mu.cube_indices(cube)]))


def mean(mu: DiscreteMeasure, f, cube: Cube):
    """Mean m_Q(f) of f over the cube with respect to mu."""
    v = function_values(mu, f)
    idx = mu.cube_indices(cube)
    mass = float(np.sum(mu.masses[idx]))
    if mass <= 0:
        raise EmptyCube(f"cube {cube} carries no mass.")
    return np.sum(v[idx] * mu.masses[idx]) / mass


def weighted_lower_median(values: np.ndarray, weights: np.ndarray) -> float:
    """
    Smallest value v with weight{f < v} <= W/2 and weight{f > v} <= W/2, W the total weight.
    Comparisons against W/2 carry a 1e-12 relative tolerance.
    """
    if values.size == 0:
        raise EmptyCube("median of an empty cube is undefined.")
    uniq, inverse = np.unique(values, return_inverse=True)
    per_value = np.bincount(inverse.reshape(-1), weights=weights, minlength=uniq.size)
    total = float(np.sum(per_value))
    cum = np.cumsum(per_value)
    half = 0.5 * total * (1.0 + 1e-12)
    ok = (cum - per_value <= half) & (total - cum <= half)
    return float(uniq[np.argmax(ok)])


def _growth_row(args):
    mu, i, n = args
    dist = mu.euclidean_distances(mu.points[i])
    order = np.argsort(dist, kind="stable")
    dist = dist[order]
    cum = np.cumsum(mu.masses[order])
    radii = np.concatenate(([mu.r_min], dist[dist >= mu.r_min]))
    masses_at = cum[np.searchsorted(dist, radii, side="right") - 1]
    return float(np.max(masses_at / radii ** n))


def growth_constant(mu: DiscreteMeasure, ctx) -> float:
    """
    Smallest C0 with mu(B(x, r)) <= C0 * r^n for every support point x and r >= r_min.

    Parameters:
    - mu (DiscreteMeasure): the measure
    - ctx (AnalysisContext or int): context carrying the growth exponent n

    Returns:
    - float: C0, attained on the candidate radii {r_min} and the pairwise distances >= r_min
    """
    if mu.size == 0:
        raise EmptySupport("growth constant of an empty measure is undefined.")
    n = ctx if isinstance(ctx, (int, np.integer)) else ctx.n
    rows = ordered_map(_growth_row, [(mu, i, n) for i in range(mu.size)])
    c0 = max(rows)
    logger.debug("growth constant %.6g over %d support points (n=%d)", c0, mu.size, n)
    return c0


def support_diameter(mu: DiscreteMeasure) -> float:
    """Largest Euclidean distance between two support points."""
    if mu.size == 0:
        raise EmptySupport("diameter of an empty support is undefined.")
    if mu._diameter is None:
        pts = mu.points
        best = 0.0
        for start in range(0, mu.size, 512):
            block = pts[start:start + 512]
            d2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=2)
            best = max(best, float(np.sqrt(np.max(d2))))
        mu._diameter = best
    return mu._diameter


@dataclass(frozen=True)
class AnalysisContext:
    """
    Fixed parameters of an analysis: growth exponent n, oscillation dilation rho,
    doubling threshold beta_d, regularity cap p0 and the measured growth constant c0.
    """

    n: int
    d: int
    rho: float = 2.0
    beta_d: float = 0.0
    p0: float = 0.0
    c0: float = 1.0

    def __post_init__(self):
        if not 1 <= self.n <= self.d:
            raise ValueError(f"growth exponent n must satisfy 1 <= n <= d={self.d}, got {self.n}.")
        if not self.rho > 1:
            raise ValueError(f"rho must be > 1, got {self.rho}.")
        if not self.beta_d > 2 ** self.n:
            raise ValueError(f"beta_d must exceed 2^n = {2 ** self.n}, got {self.beta_d}.")
        if not self.p0 > 0:
            raise ValueError(f"p0 must be positive, got {self.p0}.")

    @classmethod
    def build(cls, mu: DiscreteMeasure, n: int | None = None, rho: float = 2.0,
              beta_d: float | None = None, p0: float | None = None) -> "AnalysisContext":
        """Fill defaults from the measure: beta_d = 2^(d+1), p0 = max(4, 8 * C0 * 2^n)."""
        d = mu.d
        n = d if n is None else int(n)
        if not 1 <= n <= d:
            raise ValueError(f"growth exponent n must satisfy 1 <= n <= d={d}, got {n}.")
        c0 = growth_constant(mu, n)
        beta_d = float(2 ** (d + 1)) if beta_d is None else float(beta_d)
        p0 = max(4.0, 8.0 * c0 * 2 ** n) if p0 is None else float(p0)
        ctx = cls(n=n, d=d, rho=float(rho), beta_d=beta_d, p0=p0, c0=c0)
        logger.info("analysis context: n=%d d=%d rho=%g beta_d=%g p0=%g c0=%g", n, d, ctx.rho, beta_d, p0, c0)
        return ctx

    def to_dict(self) -> dict:
        return {"n": self.n, "d": self.d, "rho": self.rho, "beta_d": self.beta_d, "p0": self.p0, "c0": self.c0}
