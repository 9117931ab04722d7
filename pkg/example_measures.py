# example_measures.py
# --------------------
# Builtin measures and test functions for scenarios.
#
# Measures:
# - segment: N equispaced points on [0, 1] x {0}, masses 1/N, r_min = 1/N (1-regular)
# - square: N x N grid on [0, 1]^2, masses 1/N^2, r_min = 1/N (studied with n = 1)
# - eps_weighted: density 1 on [-2,-1] and [1,2], density eps on [-1/2,1/2],
#   trapezoid weights on the closed grid of step h, r_min = h/2
# - cantor4: centers of the generation-G squares of the 4-corner Cantor set,
#   masses 4^-G, r_min = 4^-G
# - random_cloud: seeded uniform points in [0, 1]^d with masses around 1/N
#
# Functions:
# - eps_step, log_distance, coordinate, indicator_cube, random_signs, gaussian, constant
#
# Inputs:
# - generator name and a parameter dictionary (from a scenario file)
#
# Outputs:
# - DiscreteMeasure / FunctionOnSupport, and the growth exponent n each measure is studied with
import logging

import numpy as np

from measure_core import Cube, DiscreteMeasure, FunctionOnSupport

logger = logging.getLogger(__name__)


class UnknownGenerator(ValueError):
    """Raised for a measure or function generator name that is not registered."""


# ----- measures ----------------------------------------------------------------------


def _embed(x: np.ndarray, d: int) -> np.ndarray:
    """Place 1-d coordinates on the first axis of R^d."""
    pts = np.zeros((x.size, d))
    pts[:, 0] = x
    return pts


def segment(N: int, d: int = 2) -> DiscreteMeasure:
    """
    N equispaced points k/(N-1) on the unit segment, masses 1/N.

    Parameters:
    - N (int): number of points, >= 2
    - d (int): ambient dimension; the segment lies on the first axis
    """
    N = int(N)
    if N < 2:
        raise ValueError(f"segment needs N >= 2, got {N}.")
    x = np.arange(N) / (N - 1)
    return DiscreteMeasure(_embed(x, int(d)), np.full(N, 1.0 / N), 1.0 / N)


def square(N: int) -> DiscreteMeasure:
    """N x N grid i/(N-1) on the unit square with planar Lebesgue weights 1/N^2."""
    N = int(N)
    if N < 2:
        raise ValueError(f"square needs N >= 2, got {N}.")
    axis = np.arange(N) / (N - 1)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([xx.reshape(-1), yy.reshape(-1)])
    return DiscreteMeasure(pts, np.full(N * N, 1.0 / N ** 2), 1.0 / N)


def _eps_grid(h: float):
    """Integer grid k with step 1/M, M = round(1/h); returns M and the three piece masks."""
    M = int(round(1.0 / float(h)))
    if M < 1:
        raise ValueError(f"step h must be at most 1, got {h}.")
    k = np.arange(-2 * M, 2 * M + 1)
    left = (k >= -2 * M) & (k <= -M)
    middle = np.abs(2 * k) <= M
    right = (k >= M) & (k <= 2 * M)
    return M, k, left, middle, right


def eps_weighted(h: float, eps: float, d: int = 2) -> DiscreteMeasure:
    """
    Density 1 on [-2,-1] and [1,2], density eps on [-1/2,1/2], discretized on the
    closed grid of step h with trapezoid weights (halved at the ends of every piece).

    Parameters:
    - h (float): grid step; 1/h is rounded to an integer M
    - eps (float): density of the middle piece, in (0, 1]
    - d (int): ambient dimension; the support lies on the first axis
    """
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}.")
    M, k, left, middle, right = _eps_grid(h)
    step = 1.0 / M
    density = np.where(middle, float(eps), 1.0)
    weights = step * density
    ends = (np.abs(k) == M) | (np.abs(k) == 2 * M) | (middle & (np.abs(2 * k) == M))
    weights = np.where(ends, 0.5 * weights, weights)
    keep = left | middle | right
    logger.debug("eps_weighted: M=%d, %d support points", M, int(np.sum(keep)))
    return DiscreteMeasure(_embed(k[keep] * step, int(d)), weights[keep], 0.5 * step)


def cantor4(G: int) -> DiscreteMeasure:
    """Centers of the 4^G squares of side 4^-G kept after G steps of the 4-corner construction."""
    G = int(G)
    if G < 0:
        raise ValueError(f"generation must be >= 0, got {G}.")
    centers = np.array([[0.5, 0.5]])
    side = 1.0
    for _ in range(G):
        offset = 0.375 * side
        shifts = np.array([[-offset, -offset], [offset, -offset], [-offset, offset], [offset, offset]])
        centers = (centers[:, None, :] + shifts[None, :, :]).reshape(-1, 2)
        side *= 0.25
    order = np.lexsort((centers[:, 1], centers[:, 0]))
    return DiscreteMeasure(centers[order], np.full(centers.shape[0], 4.0 ** -G), 4.0 ** -G)


def random_cloud(N: int, d: int = 2, seed: int = 0) -> DiscreteMeasure:
    """Seeded uniform points in the unit cube with masses uniform in [0.5, 1.5] / N."""
    rng = np.random.default_rng(int(seed))
    N, d = int(N), int(d)
    pts = rng.uniform(0.0, 1.0, size=(N, d))
    masses = rng.uniform(0.5, 1.5, size=N) / N
    return DiscreteMeasure(pts, masses, 0.5 * N ** (-1.0 / d))


# name -> (builder, growth exponent used by default; None means d)
MEASURE_GENERATORS = {
    "segment": (segment, 1),
    "square": (square, 1),
    "eps_weighted": (eps_weighted, 1),
    "cantor4": (cantor4, 1),
    "random_cloud": (random_cloud, None),
}


def generate_measure(name: str, params: dict | None = None) -> tuple[DiscreteMeasure, int]:
    """
    Build a registered measure.

    Returns:
    - mu (DiscreteMeasure)
    - n (int): the growth exponent the measure is meant to be studied with
    """
    try:
        builder, n = MEASURE_GENERATORS[name]
    except KeyError as e:
        raise UnknownGenerator(f"unknown measure generator {name!r}; known: {sorted(MEASURE_GENERATORS)}.") from e
    mu = builder(**(params or {}))
    return mu, mu.d if n is None else n


# ----- functions ---------------------------------------------------------------------


def eps_step(mu: DiscreteMeasure, eps: float) -> FunctionOnSupport:
    """eps^-1 (chi_[1/4,1/2] - chi_[-1/2,-1/4]) in the first coordinate."""
    x = mu.points[:, 0]
    up = (x >= 0.25 - 1e-12) & (x <= 0.5 + 1e-12)
    down = (x >= -0.5 - 1e-12) & (x <= -0.25 + 1e-12)
    return FunctionOnSupport((up.astype(float) - down.astype(float)) / float(eps))


def log_distance(mu: DiscreteMeasure, point=None) -> FunctionOnSupport:
    """log |x - x0|, floored at r_min; x0 defaults to the first support point."""
    x0 = mu.points[0] if point is None else np.asarray(point, dtype=float)
    dist = np.maximum(mu.euclidean_distances(x0), mu.r_min)
    return FunctionOnSupport(np.log(dist))


def coordinate(mu: DiscreteMeasure, axis: int = 0) -> FunctionOnSupport:
    return FunctionOnSupport(mu.points[:, int(axis)].copy())


def indicator_cube(mu: DiscreteMeasure, center, side: float) -> FunctionOnSupport:
    values = np.zeros(mu.size)
    values[mu.cube_indices(Cube(center, side))] = 1.0
    return FunctionOnSupport(values)


def random_signs(mu: DiscreteMeasure, seed: int = 0) -> FunctionOnSupport:
    rng = np.random.default_rng(int(seed))
    return FunctionOnSupport(rng.choice([-1.0, 1.0], size=mu.size))


def gaussian(mu: DiscreteMeasure, seed: int = 0, mean_zero: bool = False) -> FunctionOnSupport:
    """Seeded standard normal values; with mean_zero the mu-mean is subtracted."""
    rng = np.random.default_rng(int(seed))
    values = rng.standard_normal(mu.size)
    if mean_zero:
        values = values - np.sum(values * mu.masses) / mu.total_mass
    return FunctionOnSupport(values)


def constant(mu: DiscreteMeasure, value: float = 1.0) -> FunctionOnSupport:
    return FunctionOnSupport(np.full(mu.size, float(value)))


FUNCTION_GENERATORS = {
    "eps_step": eps_step,
    "log_distance": log_distance,
    "coordinate": coordinate,
    "indicator_cube": indicator_cube,
    "random_signs": random_signs,
    "gaussian": gaussian,
    "constant": constant,
}


def generate_function(name: str, mu: DiscreteMeasure, params: dict | None = None) -> FunctionOnSupport:
    try:
        builder = FUNCTION_GENERATORS[name]
    except KeyError as e:
        raise UnknownGenerator(f"unknown function generator {name!r}; known: {sorted(FUNCTION_GENERATORS)}.") from e
    return builder(mu, **(params or {}))
