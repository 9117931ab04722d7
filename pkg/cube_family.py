# cube_family.py
# ---------------
# Finite families of cubes over which every supremum of the toolkit is taken.
#
# A family is built from dyadic side lengths 2^j in [r_min, 2 * diam(supp mu)]
# and centers at support points (optionally with seeded random shifts snapped
# back to the support), then closed under the doubling companion Q -> Q~.
# Because suprema run over a finite family, every reported norm is a lower
# bound of the analytic one.
#
# The family precomputes, once per (measure, context):
# - support indices and masses of every cube, masses of common dilates
# - the companion index of every cube and its (2, beta_d)-doubling flag
# - nested pairs with their K_{Q,R}, from a prefix sum of the K terms
import logging
import math
import threading

import numpy as np

from cube_coefficients import doubling_companion, k_terms, n_steps, NestedCubePair
from measure_core import (AnalysisContext, Cube, DiscreteMeasure, EmptySupport, cube_mass, support_diameter,
                          weighted_lower_median)
from parallel_sweeps import ordered_map

logger = logging.getLogger(__name__)


class EmptyFamily(ValueError):
    """Raised when a supremum is requested over a family without usable cubes."""


def _key(cube: Cube):
    return cube.center, cube.side


class CubeFamily:
    """
    Closure of a list of cubes under the doubling companion.

    Parameters:
    - mu (DiscreteMeasure), ctx (AnalysisContext)
    - cubes (iterable of Cube): seed cubes; cubes of zero mass or below r_min are dropped
    - full_pairs (bool): keep nested pairs with any K instead of K <= p0
    """

    def __init__(self, mu: DiscreteMeasure, ctx: AnalysisContext, cubes, full_pairs: bool = False):
        self.mu = mu
        self.ctx = ctx
        self.full_pairs = bool(full_pairs)

        seen = {}
        for cube in cubes:
            if cube.side < mu.r_min * (1.0 - 1e-12) or _key(cube) in seen:
                continue
            if cube_mass(mu, cube) > 0:
                seen[_key(cube)] = cube
        seeds = list(seen.values())
        if not seeds:
            raise EmptyFamily("no cube of the family carries mass at a side >= r_min.")

        companions = ordered_map(lambda c: doubling_companion(mu, ctx, c), seeds)
        for comp in companions:
            seen.setdefault(_key(comp), comp)
        self.cubes = list(seen.values())
        position = {_key(c): i for i, c in enumerate(self.cubes)}
        # companions of added companions are themselves
        self.companion = np.array(
            [position[_key(comp)] for comp in companions] + list(range(len(seeds), len(self.cubes))),
            dtype=np.intp,
        )
        self.doubling = self.companion == np.arange(len(self.cubes))

        self.index = [mu.cube_indices(c) for c in self.cubes]
        self.mass = np.array([np.sum(mu.masses[idx]) for idx in self.index])
        self.centers = np.array([c.center for c in self.cubes])
        self.sides = np.array([c.side for c in self.cubes])
        self._dilated = {}
        self._prefix = None
        self._pairs = {}
        # memo fills may come from sweep worker threads
        self._lock = threading.RLock()
        logger.info("cube family: %d seed cubes, %d after companion closure, %d doubling",
                    len(seeds), len(self.cubes), int(np.sum(self.doubling)))

    def __len__(self):
        return len(self.cubes)

    # ----- masses and coefficients -------------------------------------------

    def dilate_mass(self, i: int, s: float) -> float:
        """mu(s Q_i), memoized per (cube, factor)."""
        key = (i, float(s))
        with self._lock:
            if key not in self._dilated:
                self._dilated[key] = cube_mass(self.mu, self.cubes[i].dilate(s))
            return self._dilated[key]

    def dilate_masses(self, s: float) -> np.ndarray:
        return np.array([self.dilate_mass(i, s) for i in range(len(self.cubes))])

    def _k_prefix(self):
        with self._lock:
            if self._prefix is None:
                top = float(np.max(self.sides))
                rows = []
                for cube in self.cubes:
                    steps = n_steps(NestedCubePair(cube, Cube(cube.center, max(top, cube.side))))
                    rows.append(np.cumsum(k_terms(self.mu, self.ctx, cube, steps)))
                self._prefix = rows
            return self._prefix

    def k_value(self, i: int, j: int) -> float:
        """K_{Q_i,Q_j} for cubes i inside j, read from the prefix sums."""
        steps = n_steps(NestedCubePair(self.cubes[i], self.cubes[j]))
        return 1.0 + (float(self._k_prefix()[i][steps - 1]) if steps else 0.0)

    def _nested_steps(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices j != i with Q_i inside Q_j, and the n_steps of each pair."""
        gap = np.max(np.abs(self.centers - self.centers[i]), axis=1) + 0.5 * self.sides[i]
        nested = gap <= 0.5 * self.sides * (1.0 + 1e-12)
        nested[i] = False
        outer = np.flatnonzero(nested)
        ratio = self.sides[outer] / self.sides[i]
        steps = np.where(ratio > 1, np.ceil(np.log2(np.maximum(ratio, 1.0))), 0).astype(np.int64)
        steps = np.maximum(steps, 0)
        low = self.sides[i] * 2.0 ** steps < self.sides[outer]
        steps[low] += 1
        high = (steps > 0) & (self.sides[i] * 2.0 ** (steps - 1) >= self.sides[outer])
        steps[high] -= 1
        return outer, steps

    def _pair_table(self, doubling_only: bool):
        with self._lock:
            if doubling_only not in self._pairs:
                self._pairs[doubling_only] = self._build_pair_table(doubling_only)
            return self._pairs[doubling_only]

    def _build_pair_table(self, doubling_only: bool):
        prefix = self._k_prefix()
        inner_ids, outer_ids, ks = [], [], []
        for i in range(len(self.cubes)):
            if doubling_only and not self.doubling[i]:
                continue
            outer, steps = self._nested_steps(i)
            if doubling_only:
                keep = self.doubling[outer]
                outer, steps = outer[keep], steps[keep]
            k = 1.0 + np.where(steps > 0, prefix[i][np.maximum(steps - 1, 0)] if prefix[i].size else 0.0, 0.0)
            if not self.full_pairs:
                keep = k <= self.ctx.p0
                outer, k = outer[keep], k[keep]
            inner_ids.append(np.full(outer.shape, i, dtype=np.intp))
            outer_ids.append(outer)
            ks.append(k)
        if inner_ids:
            table = (np.concatenate(inner_ids), np.concatenate(outer_ids), np.concatenate(ks))
        else:
            table = (np.empty(0, np.intp), np.empty(0, np.intp), np.empty(0))
        logger.info("%s pairs: %d (K cap %s)", "doubling" if doubling_only else "all",
                    table[0].size, "off" if self.full_pairs else f"{self.ctx.p0:g}")
        return table

    def doubling_pair_table(self):
        """(inner indices, outer indices, K) over nested pairs of doubling cubes."""
        return self._pair_table(True)

    def all_pair_table(self):
        """(inner indices, outer indices, K) over all nested pairs of the family."""
        return self._pair_table(False)

    @property
    def doubling_pairs(self) -> list[NestedCubePair]:
        inner, outer, _ = self.doubling_pair_table()
        return [NestedCubePair(self.cubes[i], self.cubes[j]) for i, j in zip(inner, outer)]

    def cubes_containing(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.flatnonzero(np.max(np.abs(self.centers - x), axis=1) <= 0.5 * self.sides)

    # ----- per-cube statistics -----------------------------------------------

    def means(self, values: np.ndarray) -> np.ndarray:
        """m_Q(f) for every cube of the family."""
        w = self.mu.masses
        return np.array([np.sum(values[idx] * w[idx]) for idx in self.index]) / self.mass

    def medians(self, values: np.ndarray) -> np.ndarray:
        """Lower weighted median of f on every cube."""
        return np.array([weighted_lower_median(values[idx], self.mu.masses[idx]) for idx in self.index])


def dyadic_sides(mu: DiscreteMeasure, min_side: float | None = None, max_side: float | None = None) -> list[float]:
    """Powers of two between min_side (default r_min) and max_side (default 2 * diam)."""
    lo = mu.r_min if min_side is None else float(min_side)
    hi = 2.0 * support_diameter(mu) if max_side is None else float(max_side)
    hi = max(hi, lo)
    j_lo = math.ceil(math.log2(lo) - 1e-12)
    j_hi = math.floor(math.log2(hi) + 1e-12)
    sides = [2.0 ** j for j in range(j_lo, j_hi + 1)]
    return sides or [2.0 ** j_lo]


def build_family(mu: DiscreteMeasure, ctx: AnalysisContext, centers=None, min_side: float | None = None,
                 max_side: float | None = None, shifts: int = 0, seed: int = 0,
                 max_centers: int | None = None, extra_cubes=(), full_pairs: bool = False) -> CubeFamily:
    """
    Build the standard family: dyadic sides times centers, plus shifted and explicit cubes.

    Parameters:
    - centers (array-like or None): explicit centers; default is the support (capped by max_centers)
    - min_side, max_side (float or None): side range, default [r_min, 2 * diam]
    - shifts (int): number of random shifted copies per (center, side), snapped to the support
    - seed (int): seed of the shift and center sampling
    - max_centers (int or None): sample at most this many support points as centers
    - extra_cubes (iterable of Cube): added as is
    - full_pairs (bool): keep pairs with K > p0
    """
    if mu.size == 0:
        raise EmptySupport("cannot build a cube family on an empty measure.")
    rng = np.random.default_rng(seed)
    extra_cubes = list(extra_cubes)
    if centers is None:
        ids = np.arange(mu.size)
        if max_centers is not None and max_centers < mu.size:
            ids = np.sort(rng.choice(mu.size, size=int(max_centers), replace=False))
        center_pts = mu.points[ids]
    else:
        center_pts = np.asarray(centers, dtype=float).reshape(-1, mu.d)

    sides = dyadic_sides(mu, min_side, max_side)
    cubes = []
    for side in sides:
        for c in center_pts:
            cubes.append(Cube(c, side))
            for _ in range(int(shifts)):
                moved = c + rng.uniform(-0.5 * side, 0.5 * side, size=mu.d)
                cubes.append(Cube(mu.points[mu.nearest_index(moved)], side))
    cubes.extend(extra_cubes)
    logger.info("building family: %d centers x %d sides (%g..%g), %d shifts, %d extra",
                len(center_pts), len(sides), sides[0], sides[-1], int(shifts), len(extra_cubes))
    return CubeFamily(mu, ctx, cubes, full_pairs=full_pairs)
