# cube_coefficients.py
# ---------------------
# Closeness coefficients between nested cubes and doubling-cube searches.
#
# K_{Q,R} = 1 + sum_{k=1..N} mu(2^k Q) / l(2^k Q)^n, N the first k >= 0 with
# 2^k l(Q) >= l(R). It measures how far apart Q and R are in the scale of the
# measure: with a doubling measure it behaves like 1 + log2(l(R)/l(Q)), with a
# measure concentrated on a small set it stays bounded.
#
# Also here:
# - (alpha, beta)-doubling test, the doubling companion Q~ and the
#   "largest doubling cube below a scale" search
# - the concentric chains used to restrict regularity checks to pairs with K <= P0
import logging
import math
from dataclasses import dataclass

import numpy as np

from measure_core import (AnalysisContext, Cube, DiscreteMeasure, EmptySupport, ResolutionError, check_resolution,
                          cube_mass, support_diameter)

logger = logging.getLogger(__name__)

# a companion search doubles the side at most this many times
_MAX_DOUBLINGS = 2048


class NotNested(ValueError):
    """Raised when the inner cube of a pair is not contained in the outer one."""


@dataclass(frozen=True)
class NestedCubePair:
    inner: Cube
    outer: Cube

    def __post_init__(self):
        if not self.outer.contains(self.inner):
            raise NotNested(f"{self.inner} is not contained in {self.outer}.")


def n_steps(pair: NestedCubePair) -> int:
    """Smallest k >= 0 with 2^k * l(Q) >= l(R)."""
    lq, lr = pair.inner.side, pair.outer.side
    if lq >= lr:
        return 0
    k = max(0, math.ceil(math.log2(lr / lq)))
    while lq * 2.0 ** k < lr:
        k += 1
    while k > 0 and lq * 2.0 ** (k - 1) >= lr:
        k -= 1
    return k


def random_nested_pair(mu: DiscreteMeasure, rng: np.random.Generator, max_ratio_log2: int) -> NestedCubePair:
    """Dyadic Q centered at a support point, and a dyadic R containing it at a random position."""
    diam = max(support_diameter(mu), mu.r_min)
    j_lo = int(np.ceil(np.log2(mu.r_min)))
    j_hi = max(j_lo, int(np.floor(np.log2(2.0 * diam))))
    j = int(rng.integers(j_lo, j_hi + 1))
    m = int(rng.integers(0, max(1, min(max_ratio_log2, j_hi - j + 1)) + 1))
    center = mu.points[int(rng.integers(mu.size))]
    inner = Cube(center, 2.0 ** j)
    outer_side = 2.0 ** (j + m)
    shift = rng.uniform(-1.0, 1.0, size=mu.d) * 0.5 * (outer_side - inner.side)
    return NestedCubePair(inner, Cube(center + shift, outer_side))


def k_ladder_masses(mu: DiscreteMeasure, cube: Cube, steps: int) -> np.ndarray:
    """mu(2^k Q) for k = 0..steps, by thresholding the Chebyshev distances to the center."""
    cheb = mu.chebyshev_distances(cube.center)
    half = 0.5 * cube.side
    return np.array([np.sum(mu.masses[cheb <= half * 2.0 ** k]) for k in range(steps + 1)])


def k_terms(mu: DiscreteMeasure, ctx: AnalysisContext, cube: Cube, steps: int) -> np.ndarray:
    """The density terms mu(2^k Q) / l(2^k Q)^n, k = 1..steps."""
    if steps <= 0:
        return np.empty(0)
    masses = k_ladder_masses(mu, cube, steps)[1:]
    sides = cube.side * 2.0 ** np.arange(1, steps + 1)
    return masses / sides ** ctx.n


def k_coeff(mu: DiscreteMeasure, ctx: AnalysisContext, pair: NestedCubePair) -> float:
    """
    K_{Q,R} for a nested pair.

    Parameters:
    - mu (DiscreteMeasure), ctx (AnalysisContext)
    - pair (NestedCubePair): Q = pair.inner, R = pair.outer

    Returns:
    - float: 1 + sum_{k=1..N} mu(2^k Q) / l(2^k Q)^n, exactly 1 when l(Q) >= l(R)
    """
    check_resolution(mu, pair.inner)
    steps = n_steps(pair)
    terms = k_terms(mu, ctx, pair.inner, steps)
    return 1.0 + (float(np.cumsum(terms)[-1]) if steps else 0.0)


def k_coeff_radial(mu: DiscreteMeasure, ctx: AnalysisContext, pair: NestedCubePair) -> float:
    """Grid-free variant: 1 + sum of mass(y) / |y - x_Q|^n over l(Q) <= |y - x_Q| <= l(R)."""
    check_resolution(mu, pair.inner)
    dist = mu.euclidean_distances(pair.inner.center)
    shell = (dist >= pair.inner.side) & (dist <= pair.outer.side)
    return 1.0 + float(np.sum(mu.masses[shell] / dist[shell] ** ctx.n))


def is_doubling(mu: DiscreteMeasure, cube: Cube, alpha: float, beta: float) -> bool:
    """mu(alpha Q) <= beta mu(Q); a zero-mass cube is doubling only if alpha Q is empty too."""
    inner = cube_mass(mu, cube)
    outer = cube_mass(mu, cube.dilate(alpha))
    if inner == 0:
        return outer == 0
    return outer <= beta * inner


def doubling_companion(mu: DiscreteMeasure, ctx: AnalysisContext, cube: Cube) -> Cube:
    """Q~ = 2^N Q for the smallest N >= 0 making 2^N Q (2, beta_d)-doubling."""
    if mu.size == 0:
        raise EmptySupport("doubling companion needs a nonempty support.")
    current = cube
    for _ in range(_MAX_DOUBLINGS):
        if is_doubling(mu, current, 2.0, ctx.beta_d):
            return current
        current = current.dilate(2.0)
    raise RuntimeError(f"no doubling dilate of {cube} found after {_MAX_DOUBLINGS} doublings.")


def largest_doubling_below(mu: DiscreteMeasure, ctx: AnalysisContext, x, scale: float, predicate=None):
    """
    Largest (2, beta_d)-doubling cube centered at x with side scale * 2^-k >= r_min
    that satisfies `predicate` (any cube when predicate is None). Returns None
    when no scanned side qualifies.
    """
    if scale < mu.r_min * (1.0 - 1e-12):
        raise ResolutionError(f"scale {scale:g} is below the resolution r_min={mu.r_min:g}.")
    side = float(scale)
    while side >= mu.r_min * (1.0 - 1e-12):
        cube = Cube(x, side)
        if is_doubling(mu, cube, 2.0, ctx.beta_d) and (predicate is None or predicate(cube)):
            return cube
        side *= 0.5
    return None


def _first_dilate_above(mu, ctx, cube, cap_side, threshold):
    """First 2^k Q (k >= 1) with K_{Q, 2^k Q} > threshold, or None once the side reaches cap_side."""
    k = 1
    while cube.side * 2.0 ** (k - 1) < cap_side:
        candidate = cube.dilate(2.0 ** k)
        if k_coeff(mu, ctx, NestedCubePair(cube, candidate)) > threshold:
            return candidate
        k += 1
    return None


def concentric_chain(mu: DiscreteMeasure, ctx: AnalysisContext, cube: Cube, outer: Cube,
                     threshold: float | None = None) -> tuple[list[Cube], list[float]]:
    """
    Chain Q = Q_1 < Q_2 < ... < Q_m = R of concentric dyadic dilates with every
    consecutive K_{Q_i,Q_{i+1}} > threshold (default P0).

    Returns:
    - cubes (list[Cube]): the chain, first Q and last R
    - links (list[float]): K_{Q_i,Q_{i+1}} for consecutive cubes
    """
    pair = NestedCubePair(cube, outer)
    if not np.allclose(cube.center, outer.center):
        raise NotNested("concentric chains need cubes with a common center.")
    threshold = ctx.p0 if threshold is None else float(threshold)
    chain = [pair.inner]
    while True:
        nxt = _first_dilate_above(mu, ctx, chain[-1], outer.side, threshold)
        if nxt is None or nxt.side >= outer.side:
            break
        chain.append(nxt)
    chain.append(outer)
    # the last link may be short; merge it into the previous one
    if len(chain) > 2 and k_coeff(mu, ctx, NestedCubePair(chain[-2], chain[-1])) <= threshold:
        del chain[-2]
    links = [k_coeff(mu, ctx, NestedCubePair(a, b)) for a, b in zip(chain[:-1], chain[1:])]
    return chain, links


def pok_chain(mu: DiscreteMeasure, ctx: AnalysisContext, cube: Cube, outer: Cube,
              threshold: float | None = None) -> tuple[list[Cube], list[float], float]:
    """
    Chain of doubling cubes Q = Q~_0 < Q~_1 < ... < Q~_N inside a concentric R:
    Q_{i+1} is the first 2^k Q~_i with K_{Q~_i, Q_{i+1}} > threshold and Q~_{i+1}
    its doubling companion; the chain stops before the first companion that
    reaches R.

    Returns:
    - cubes (list[Cube]): Q~_0..Q~_N
    - links (list[float]): K_{Q~_i, Q~_{i+1}}
    - tail (float): K_{Q~_N, R}
    """
    NestedCubePair(cube, outer)
    if not np.allclose(cube.center, outer.center):
        raise NotNested("doubling chains need cubes with a common center.")
    threshold = ctx.p0 if threshold is None else float(threshold)
    chain = [cube]
    while True:
        nxt = _first_dilate_above(mu, ctx, chain[-1], outer.side, threshold)
        if nxt is None:
            break
        companion = doubling_companion(mu, ctx, nxt)
        if companion.side >= outer.side:
            break
        chain.append(companion)
    links = [k_coeff(mu, ctx, NestedCubePair(a, b)) for a, b in zip(chain[:-1], chain[1:])]
    tail = k_coeff(mu, ctx, NestedCubePair(chain[-1], outer))
    logger.debug("doubling chain of length %d, links %s, tail %.4g", len(chain), links, tail)
    return chain, links, tail
