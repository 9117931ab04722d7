# cauchy_singular.py
# -------------------
# Planar case (d = 2, n = 1): the truncated Cauchy transform of a discrete
# measure and its relationship with Menger curvature.
#
# Points (a, b) are read as complex numbers a + ib. The transform at level eps is
#   C_eps f(x) = sum over y with |x - y| > eps of f(y) mass(y) / (x - y).
# Since the measure is discrete, every truncation level is floored at r_min.
#
# Inputs:
# - DiscreteMeasure with d = 2, complex or real FunctionOnSupport values
#
# Outputs:
# - transforms, curvature sums, the T(1) and uniform L1 reports, commutators,
#   the maximal truncated transform and the pointwise commutator diagnostic
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from cube_family import CubeFamily, EmptyFamily
from maximal_ops import evaluate_all
from measure_core import (AnalysisContext, Cube, DiscreteMeasure, ResolutionError, cube_mass,
                          function_values)
from oscillation_norms import rbmo_star
from parallel_sweeps import index_chunks, ordered_map, pairwise_sum

logger = logging.getLogger(__name__)

_ROW_CHUNK = 256


class CoincidentPoints(ValueError):
    """Raised when the curvature of a triple with repeated points is requested."""


class PlanarMeasure:
    """A two dimensional DiscreteMeasure read in the complex plane, with growth exponent 1."""

    def __init__(self, mu: DiscreteMeasure, ctx: AnalysisContext | None = None):
        if mu.d != 2:
            raise ValueError(f"the Cauchy transform needs a planar measure, got d={mu.d}.")
        if ctx is not None and ctx.n != 1:
            raise ValueError(f"the Cauchy transform needs n = 1, got n={ctx.n}.")
        self.mu = mu
        self.z = mu.points[:, 0] + 1j * mu.points[:, 1]


@dataclass
class TruncationGrid:
    epsilons: list[float]

    def __post_init__(self):
        self.epsilons = [float(e) for e in self.epsilons]
        if not self.epsilons:
            raise ValueError("truncation grid must not be empty.")
        if any(b >= a for a, b in zip(self.epsilons[:-1], self.epsilons[1:])):
            raise ValueError(f"truncation levels must be strictly decreasing, got {self.epsilons}.")

    def check(self, mu: DiscreteMeasure) -> "TruncationGrid":
        if self.epsilons[-1] < mu.r_min * (1.0 - 1e-12):
            raise ResolutionError(f"truncation level {self.epsilons[-1]:g} is below r_min={mu.r_min:g}.")
        return self

    @classmethod
    def dyadic(cls, first: float, count: int) -> "TruncationGrid":
        """first, first / 2, ..., count levels."""
        return cls([first * 2.0 ** -k for k in range(count)])


def _planar(mu) -> PlanarMeasure:
    return mu if isinstance(mu, PlanarMeasure) else PlanarMeasure(mu)


def _check_eps(mu: DiscreteMeasure, eps: float) -> None:
    if eps < mu.r_min * (1.0 - 1e-12):
        raise ResolutionError(f"truncation level {eps:g} is below r_min={mu.r_min:g}.")


# ----- transform ---------------------------------------------------------------------


def cauchy_truncated(mu, f, eps: float, x) -> complex:
    """C_eps f(x) at any point x of the plane."""
    pm = _planar(mu)
    _check_eps(pm.mu, eps)
    v = function_values(pm.mu, f)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    zx = complex(x[0], x[1])
    diff = zx - pm.z
    far = np.abs(diff) > eps
    return complex(np.sum(v[far] * pm.mu.masses[far] / diff[far]))


def _transform_rows(z_rows, z_cols, weights, eps):
    diff = z_rows[:, None] - z_cols[None, :]
    far = np.abs(diff) > eps
    safe = np.where(far, diff, 1.0)
    return np.sum(np.where(far, weights[None, :] / safe, 0.0), axis=1)


def cauchy_vector(mu, f, eps: float, rows: np.ndarray | None = None, cols: np.ndarray | None = None) -> np.ndarray:
    """
    C_eps f at support points.

    Parameters:
    - rows (index array or None): evaluation points, default all support points
    - cols (index array or None): restrict f to these support points (f * chi of a set)
    """
    pm = _planar(mu)
    _check_eps(pm.mu, eps)
    v = np.asarray(function_values(pm.mu, f), dtype=complex)
    rows = np.arange(pm.mu.size) if rows is None else np.asarray(rows)
    cols = np.arange(pm.mu.size) if cols is None else np.asarray(cols)
    weights = v[cols] * pm.mu.masses[cols]
    z_cols = pm.z[cols]
    parts = ordered_map(lambda r: _transform_rows(pm.z[rows[r.start:r.stop]], z_cols, weights, eps),
                        index_chunks(rows.size, _ROW_CHUNK))
    return np.concatenate(parts) if parts else np.empty(0, dtype=complex)


def maximal_truncated(mu, f, grid: TruncationGrid) -> np.ndarray:
    """T_* f = max over the grid of |C_eps f| at every support point."""
    pm = _planar(mu)
    grid.check(pm.mu)
    return np.max([np.abs(cauchy_vector(pm, f, eps)) for eps in grid.epsilons], axis=0)


# ----- curvature ---------------------------------------------------------------------


def menger_curvature(x, y, z) -> float:
    """Inverse circumradius of the triangle xyz; zero for collinear points."""
    x, y, z = (np.asarray(p, dtype=float) for p in (x, y, z))
    a, b, c = np.linalg.norm(x - y), np.linalg.norm(y - z), np.linalg.norm(z - x)
    if a == 0 or b == 0 or c == 0:
        raise CoincidentPoints("Menger curvature needs three distinct points.")
    cross = (y[0] - x[0]) * (z[1] - x[1]) - (y[1] - x[1]) * (z[0] - x[0])
    return float(2.0 * abs(cross) / (a * b * c))


def melnikov_sum(z1: complex, z2: complex, z3: complex) -> complex:
    """Sum over the six permutations s of 1 / ((z_s1 - z_s3) * conj(z_s2 - z_s3)); equals c^2."""
    pts = (z1, z2, z3)
    total = 0j
    for i, j, k in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        total += 1.0 / ((pts[i] - pts[k]) * np.conj(pts[j] - pts[k]))
    return total


def _curvature_sq(zi, zj, zk):
    """c^2 for broadcast arrays of complex points (zero where two points coincide)."""
    a2 = np.abs(zi - zj) ** 2
    b2 = np.abs(zj - zk) ** 2
    c2 = np.abs(zk - zi) ** 2
    cross = np.imag(np.conj(zj - zi) * (zk - zi))
    den = a2 * b2 * c2
    return np.where(den > 0, 4.0 * cross ** 2 / np.where(den > 0, den, 1.0), 0.0)


def _triple_row(i, z, m, a, eps):
    """Contribution of the unordered triples {i < j < k}, all sides > eps."""
    rest = np.arange(i + 1, z.size)
    if rest.size < 2:
        return 0.0
    zj = z[rest][:, None]
    zk = z[rest][None, :]
    upper = rest[:, None] < rest[None, :]
    ok = upper & (np.abs(zj - zk) > eps)
    ok &= (np.abs(z[i] - z[rest]) > eps)[:, None] & (np.abs(z[i] - z[rest]) > eps)[None, :]
    aj, ak = a[rest][:, None], a[rest][None, :]
    weight = 2.0 * (aj * ak + a[i] * aj + a[i] * ak)
    mass = m[i] * m[rest][:, None] * m[rest][None, :]
    terms = np.where(ok, _curvature_sq(z[i], zj, zk) * mass * weight, 0.0)
    return float(np.sum(terms))


def curvature_triple_sum(mu, cube: Cube, eps: float, a=None) -> float:
    """
    Sum over ordered triples (x, y, z) of support points in the cube with all
    pairwise distances > eps of c(x,y,z)^2 a(y) a(z) mass(x) mass(y) mass(z).

    a defaults to 1. Unordered triples are enumerated once; per-point partial
    sums are combined by pairwise summation in index order.
    """
    pm = _planar(mu)
    _check_eps(pm.mu, eps)
    idx = pm.mu.cube_indices(cube)
    if idx.size < 3:
        return 0.0
    a_all = np.ones(pm.mu.size) if a is None else np.real(function_values(pm.mu, a)).astype(float)
    z, m, av = pm.z[idx], pm.mu.masses[idx], a_all[idx]
    partials = ordered_map(lambda i: _triple_row(i, z, m, av, eps), range(idx.size))
    return float(pairwise_sum(partials))


def _remainder_row(x, z, m, a, eps):
    dx = z[x] - z
    near = np.abs(dx) > eps
    ids = np.flatnonzero(near)
    if ids.size == 0:
        return 0.0
    k = 1.0 / dx[ids]
    close = np.abs(z[ids][:, None] - z[ids][None, :]) <= eps
    prod = np.real(k[:, None] * np.conj(k[None, :]))
    ay, az = a[ids][:, None], a[ids][None, :]
    weight = 2.0 * (ay * az + a[x] * ay + a[x] * az)
    mass = m[x] * m[ids][:, None] * m[ids][None, :]
    return float(np.sum(np.where(close, prod * weight * mass, 0.0)))


def curvature_identity(mu, cube: Cube, eps: float, a=None) -> dict:
    """
    Both sides of the curvature identity for a real function a supported on the cube:

      2 int_Q |C_eps a|^2 + 4 Re int_Q a C_eps a conj(C_eps chi_Q) = triple_sum(a) + remainder

    where the remainder collects the triples with |x - y|, |x - z| > eps and
    |y - z| <= eps (including y = z). Returns lhs, triple, remainder, the
    identity defect and the scale ||a||_inf^2 mu(2Q).
    """
    pm = _planar(mu)
    _check_eps(pm.mu, eps)
    idx = pm.mu.cube_indices(cube)
    a_all = np.ones(pm.mu.size) if a is None else np.real(function_values(pm.mu, a)).astype(float)
    inside = np.zeros(pm.mu.size)
    inside[idx] = 1.0
    a_q = a_all * inside
    m = pm.mu.masses

    ca = cauchy_vector(pm, a_q, eps, rows=idx, cols=idx)
    cchi = cauchy_vector(pm, inside, eps, rows=idx, cols=idx)
    lhs = 2.0 * np.sum(np.abs(ca) ** 2 * m[idx]) + 4.0 * np.real(np.sum(a_q[idx] * ca * np.conj(cchi) * m[idx]))

    triple = curvature_triple_sum(pm, cube, eps, a_all)
    z, mq, aq = pm.z[idx], m[idx], a_all[idx]
    remainder = float(pairwise_sum(ordered_map(lambda x: _remainder_row(x, z, mq, aq, eps), range(idx.size))))
    sup_a = float(np.max(np.abs(aq))) if aq.size else 0.0
    scale = sup_a ** 2 * cube_mass(pm.mu, cube.dilate(2.0))
    return {
        "lhs": float(lhs),
        "triple": triple,
        "remainder": remainder,
        "defect": float(abs(lhs - triple - remainder)),
        "scale": scale,
    }


# ----- reports -----------------------------------------------------------------------


@dataclass
class SweepReport:
    """Supremum of a ratio over (cube, eps[, test function]) with its witness and the full table."""

    sup: float
    witness: dict
    table: pd.DataFrame = field(repr=False)

    def to_dict(self) -> dict:
        return {"sup": float(self.sup), "witness": self.witness,
                "table": self.table[["side", "eps", "ratio"]].to_numpy().tolist()}


def _require_family(family):
    if family is None or len(family) == 0:
        raise EmptyFamily("sweep requested over an empty cube family.")


def _sweep_report(rows) -> SweepReport:
    table = pd.DataFrame(rows, columns=["center_x", "center_y", "side", "eps", "test", "ratio"])
    best = int(table["ratio"].to_numpy().argmax())
    row = table.iloc[best]
    witness = {"center": [float(row["center_x"]), float(row["center_y"])], "side": float(row["side"]),
               "eps": float(row["eps"]), "test": int(row["test"])}
    return SweepReport(float(row["ratio"]), witness, table)


def t1_report(mu, family: CubeFamily, grid: TruncationGrid) -> SweepReport:
    """sup over (Q, eps) of int_Q |C_eps chi_Q|^2 / mu(2Q)."""
    _require_family(family)
    pm = _planar(mu)
    grid.check(pm.mu)
    ones = np.ones(pm.mu.size)
    doubles = family.dilate_masses(2.0)

    def per_cube(i):
        cube, idx = family.cubes[i], family.index[i]
        double = doubles[i]
        out = []
        for eps in grid.epsilons:
            values = cauchy_vector(pm, ones, eps, rows=idx, cols=idx)
            ratio = float(np.sum(np.abs(values) ** 2 * pm.mu.masses[idx]) / double)
            out.append((cube.center[0], cube.center[1], cube.side, eps, 0, ratio))
        return out

    rows = [row for block in ordered_map(per_cube, range(len(family))) for row in block]
    report = _sweep_report(rows)
    logger.info("T(1) sweep over %d cubes x %d levels: sup %.4g", len(family), len(grid.epsilons), report.sup)
    return report


def level_suprema(report: SweepReport) -> pd.Series:
    """Largest ratio at every truncation level, indexed by eps in grid order."""
    return report.table.groupby("eps", sort=False)["ratio"].max()


def growth_factors(suprema, step: int = 1) -> np.ndarray:
    """Ratios sup(eps_{k+step}) / sup(eps_k) along the grid; empty when the grid is too short."""
    step = int(step)
    if step < 1:
        raise ValueError(f"growth step must be >= 1, got {step}.")
    values = np.asarray(suprema, dtype=float)
    if values.size <= step:
        return np.empty(0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return values[step:] / values[:-step]


def default_test_functions(mu: DiscreteMeasure, cube: Cube, seed: int = 0) -> list[np.ndarray]:
    """chi_Q and a seeded random sign pattern on Q."""
    idx = mu.cube_indices(cube)
    chi = np.zeros(mu.size)
    chi[idx] = 1.0
    rng = np.random.default_rng([seed, idx.size])
    signs = np.zeros(mu.size)
    signs[idx] = rng.choice([-1.0, 1.0], size=idx.size)
    return [chi, signs]


def uniform_l1_check(mu, ctx: AnalysisContext, family: CubeFamily, grid: TruncationGrid,
                     test_functions=None) -> SweepReport:
    """
    sup over (Q, a, eps) of int_Q |C_eps a| / (||a||_inf mu(rho Q)).

    test_functions(mu, cube) returns the functions a to try on the cube (each
    supported on the cube); the default is default_test_functions.
    """
    _require_family(family)
    pm = _planar(mu)
    grid.check(pm.mu)
    make = default_test_functions if test_functions is None else test_functions
    rho_masses = family.dilate_masses(ctx.rho)

    def per_cube(i):
        cube, idx = family.cubes[i], family.index[i]
        rho_mass = rho_masses[i]
        out = []
        for t, a in enumerate(make(pm.mu, cube)):
            a = np.asarray(a)
            sup = float(np.max(np.abs(a))) if a.size else 0.0
            for eps in grid.epsilons:
                if sup == 0:
                    ratio = 0.0
                else:
                    values = cauchy_vector(pm, a, eps, rows=idx, cols=idx)
                    ratio = float(np.sum(np.abs(values) * pm.mu.masses[idx]) / (sup * rho_mass))
                out.append((cube.center[0], cube.center[1], cube.side, eps, t, ratio))
        return out

    rows = [row for block in ordered_map(per_cube, range(len(family))) for row in block]
    return _sweep_report(rows)


# ----- commutator --------------------------------------------------------------------


def commutator(mu, b, f, eps: float, x) -> complex:
    """[b, C_eps] f (x) = b(x) C_eps f(x) - C_eps(b f)(x) at a support point x."""
    pm = _planar(mu)
    i = pm.mu.index_of(x)
    bv = np.real(function_values(pm.mu, b))
    fv = function_values(pm.mu, f)
    return bv[i] * cauchy_truncated(pm, fv, eps, x) - cauchy_truncated(pm, bv * fv, eps, x)


def commutator_vector(mu, b, f, eps: float) -> np.ndarray:
    pm = _planar(mu)
    bv = np.real(function_values(pm.mu, b))
    fv = function_values(pm.mu, f)
    return bv * cauchy_vector(pm, fv, eps) - cauchy_vector(pm, bv * fv, eps)


def commutator_ratio(mu, ctx: AnalysisContext, b, f, eps: float, family: CubeFamily, p: float = 2.0) -> dict:
    """||[b, C_eps] f||_p / ||f||_p next to rbmo_star(b) on the family."""
    pm = _planar(mu)
    m = pm.mu.masses
    num = float(np.sum(np.abs(commutator_vector(pm, b, f, eps)) ** p * m) ** (1.0 / p))
    den = float(np.sum(np.abs(function_values(pm.mu, f)) ** p * m) ** (1.0 / p))
    norm_b = rbmo_star(pm.mu, ctx, b, family).value
    ratio = num / den if den > 0 else 0.0
    return {"ratio": ratio, "rbmo_b": norm_b, "normalized": ratio / norm_b if norm_b > 0 else float("inf")}


def pointwise_commutator_diagnostic(mu, ctx: AnalysisContext, b, f, eps: float, family: CubeFamily,
                                    grid: TruncationGrid, p: float = 2.0) -> pd.DataFrame:
    """
    Per support point: M#([b, C_eps] f) against
    rbmo_star(b) * (M_{p,(9/8)} f + M_{p,(3/2)} C_eps f + T_* f), all on one family.
    """
    pm = _planar(mu)
    commuted = commutator_vector(pm, b, f, eps)
    transformed = cauchy_vector(pm, f, eps)
    frame = pd.DataFrame(pm.mu.points, columns=["x0", "x1"])
    frame["sharp_commutator"] = evaluate_all("sharp", pm.mu, ctx, commuted, family)
    frame["p_maximal_f"] = evaluate_all("p", pm.mu, ctx, f, family, p=p, eta=9.0 / 8.0)
    frame["p_maximal_tf"] = evaluate_all("p", pm.mu, ctx, transformed, family, p=p, eta=1.5)
    frame["t_star"] = maximal_truncated(pm, f, grid)
    norm_b = rbmo_star(pm.mu, ctx, b, family).value
    rhs = norm_b * (frame["p_maximal_f"] + frame["p_maximal_tf"] + frame["t_star"])
    frame["ratio"] = np.where(rhs > 0, frame["sharp_commutator"] / np.where(rhs > 0, rhs, 1.0), 0.0)
    return frame

