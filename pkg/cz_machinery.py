# cz_machinery.py
# ----------------
# Constructive Calderon-Zygmund decomposition for a discrete measure without
# the doubling property.
#
# Given f, an exponent p in [1, oo) and a level lambda, the decomposition
# f = g + sum_i (f w_i - phi_i) is built in four stages:
# 1. stopping cubes Q_i: for each support point with |f| > lambda, the largest
#    dyadic cube centered there with (1/mu(2Q)) int_Q |f|^p > lambda^p / beta_d,
#    followed by an almost disjoint greedy selection
# 2. companions R_i: the smallest (6, 6^(n+1))-doubling cube among 6^k Q_i, k >= 1
# 3. corrections phi_i = alpha_i * chi_{A_i}, built in order of nondecreasing l(R_i)
# 4. assembly into the good part g and one atomic block per stopping cube
# Every stage is certified afterwards by cz_certificates.
import logging
from dataclasses import dataclass, field

import numpy as np

from cube_coefficients import k_coeff, NestedCubePair
from measure_core import AnalysisContext, Cube, DiscreteMeasure, FunctionOnSupport, function_values, support_diameter
from oscillation_norms import AtomicBlock, AtomicPiece, validate_block
from parallel_sweeps import ordered_map

logger = logging.getLogger(__name__)

ETA_GRID = (2.5, 3.0, 4.0, 8.0, 16.0)
_MAX_SHRINKS = 64


class DegenerateCompanion(ValueError):
    """Raised when a correction function would be spread over a set of zero mass."""


@dataclass
class CzDecomposition:
    lam: float
    p: float
    stopping_cubes: list[Cube]
    companions: list[Cube]
    weights: list[FunctionOnSupport]
    phis: list[FunctionOnSupport]
    good: FunctionOnSupport
    bad_blocks: list[AtomicBlock]
    h1_upper: float
    B_used: float
    residuals: list[dict] = field(default_factory=list)
    certificates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "p": self.p,
            "stopping_cubes": [c.to_dict() for c in self.stopping_cubes],
            "companions": [c.to_dict() for c in self.companions],
            "weights": [w.to_dict() for w in self.weights],
            "phis": [phi.to_dict() for phi in self.phis],
            "good": self.good.to_dict(),
            "bad_blocks": [b.to_dict() for b in self.bad_blocks],
            "h1_upper": self.h1_upper,
            "B_used": self.B_used,
            "residuals": self.residuals,
            "certificates": self.certificates,
        }


# ----- covering ---------------------------------------------------------------------


def besicovich_cover(candidates):
    """
    Greedy almost disjoint selection.

    Parameters:
    - candidates (list of (center, Cube)): each cube centered at its center

    Returns:
    - list of (center, Cube): candidates taken by nonincreasing side (stable on
      ties) whenever their center lies in no cube taken before; every candidate
      center ends up inside a selected cube
    """
    order = sorted(range(len(candidates)), key=lambda i: -candidates[i][1].side)
    chosen = []
    sel_centers, sel_half = [], []
    for i in order:
        center = np.atleast_1d(np.asarray(candidates[i][0], dtype=float))
        if sel_centers:
            inside = np.max(np.abs(np.asarray(sel_centers) - center), axis=1) <= np.asarray(sel_half)
            if np.any(inside):
                continue
        chosen.append(candidates[i])
        sel_centers.append(np.asarray(candidates[i][1].center))
        sel_half.append(0.5 * candidates[i][1].side)
    return chosen


def overlap_count(mu: DiscreteMeasure, cubes) -> np.ndarray:
    """Number of cubes containing each support point."""
    count = np.zeros(mu.size, dtype=np.int64)
    for cube in cubes:
        count[mu.cube_indices(cube)] += 1
    return count


# ----- stopping cubes ----------------------------------------------------------------


def _power_mass(mu, fp, cube):
    idx = mu.cube_indices(cube)
    return float(np.sum(fp[idx] * mu.masses[idx]))


def _cc1(mu, fp, cube, level):
    return _power_mass(mu, fp, cube) / _dilated_mass(mu, cube, 2.0) > level


def _dilated_mass(mu, cube, s):
    idx = mu.cube_indices(cube.dilate(s))
    return float(np.sum(mu.masses[idx]))


def _cc2_failures(mu, fp, cube, level):
    return [eta for eta in ETA_GRID
            if _power_mass(mu, fp, cube.dilate(eta)) / _dilated_mass(mu, cube, 2.0 * eta) > level]


def _scan_sides(mu: DiscreteMeasure) -> list[float]:
    diam = support_diameter(mu)
    top = 2.0 ** np.ceil(np.log2(max(2.0 * diam, mu.r_min)))
    sides = []
    side = float(top)
    while side >= mu.r_min:
        sides.append(side)
        side *= 0.5
    if not sides or sides[-1] > mu.r_min:
        sides.append(mu.r_min)
    return sides


def proviso_threshold(mu: DiscreteMeasure, ctx: AnalysisContext, f) -> float:
    """beta_d * ||f||_1 / ||mu||, the level every admissible lambda must exceed."""
    return ctx.beta_d * float(np.sum(np.abs(function_values(mu, f)) * mu.masses)) / mu.total_mass


def check_proviso(mu: DiscreteMeasure, ctx: AnalysisContext, f, lam: float) -> None:
    """lambda > beta_d * ||f||_1 / ||mu||, whatever the exponent of the blocks."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}.")
    threshold = proviso_threshold(mu, ctx, f)
    if not lam > threshold:
        raise ValueError(f"lambda = {lam:g} must exceed beta_d * ||f||_1 / ||mu|| = {threshold:g}.")


def cz_stopping_cubes(mu: DiscreteMeasure, ctx: AnalysisContext, f, p: float, lam: float,
                      residuals: list | None = None) -> list[Cube]:
    """
    Stopping cubes at level lambda; empty when |f| <= lambda everywhere.

    Residual problems (cc2 failures that could not be shrunk away, exceedance
    points without any qualifying scale) are appended to `residuals` when a
    list is given.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}.")
    exceed = np.flatnonzero(np.abs(function_values(mu, f)) > lam)
    if exceed.size == 0:
        return []
    check_proviso(mu, ctx, f, lam)
    fp = np.abs(function_values(mu, f)) ** p
    level = lam ** p / ctx.beta_d
    sides = _scan_sides(mu)

    def stopping_cube(i):
        x = mu.points[i]
        found = None
        for side in sides:
            cube = Cube(x, side)
            if _cc1(mu, fp, cube, level):
                found = cube
                break
        if found is None:
            return None, {"kind": "no qualifying scale", "center": x.tolist()}
        for _ in range(_MAX_SHRINKS):
            bad = _cc2_failures(mu, fp, found, level)
            if not bad:
                return found, None
            smaller = found.dilate(0.5)
            if smaller.side < mu.r_min or not _cc1(mu, fp, smaller, level):
                return found, {"kind": "cc2", "center": x.tolist(), "side": found.side, "eta": bad}
            found = smaller
        return found, {"kind": "cc2", "center": x.tolist(), "side": found.side, "eta": bad}

    scanned = ordered_map(stopping_cube, exceed)
    candidates = []
    for i, (cube, problem) in zip(exceed, scanned):
        if problem is not None and residuals is not None:
            residuals.append(problem)
        if cube is not None:
            candidates.append((mu.points[i], cube))
    selected = [cube for _, cube in besicovich_cover(candidates)]
    logger.info("stopping cubes: %d exceedance points, %d candidates, %d selected",
                exceed.size, len(candidates), len(selected))
    return selected


def cz_companions(mu: DiscreteMeasure, ctx: AnalysisContext, cubes) -> list[Cube]:
    """Smallest (6, 6^(n+1))-doubling cube among 6^k Q, k >= 1, for every Q."""
    beta = 6.0 ** (ctx.n + 1)
    out = []
    for cube in cubes:
        k = 1
        while True:
            candidate = cube.dilate(6.0 ** k)
            inner = _dilated_mass(mu, candidate, 1.0)
            if inner > 0 and _dilated_mass(mu, candidate, 6.0) <= beta * inner:
                out.append(candidate)
                break
            k += 1
    return out


def _weights(mu: DiscreteMeasure, cubes) -> tuple[list[np.ndarray], np.ndarray]:
    count = overlap_count(mu, cubes)
    safe = np.where(count > 0, count, 1)
    weights = []
    for cube in cubes:
        w = np.zeros(mu.size)
        idx = mu.cube_indices(cube)
        w[idx] = 1.0 / safe[idx]
        weights.append(w)
    return weights, count


def _intersects(a: Cube, b: Cube) -> bool:
    gap = np.abs(np.asarray(a.center) - np.asarray(b.center))
    return bool(np.all(gap <= 0.5 * (a.side + b.side)))


def cz_phi(mu: DiscreteMeasure, ctx: AnalysisContext, f, stopping_cubes, companions, lam: float, p: float):
    """
    Correction functions phi_i = alpha_i * chi_{A_i}, returned in the order of
    `stopping_cubes`, together with B_used = max sum_i |phi_i| / lambda.

    The construction runs through the companions by nondecreasing side (ties by
    center). A_k is the part of R_k where the corrections built so far on
    intersecting companions stay below 2 * (their total L1 mass) / mu(R_k); this
    keeps at least half of the mass of R_k.
    """
    v = function_values(mu, f)
    weights, _ = _weights(mu, stopping_cubes)
    order = sorted(range(len(companions)), key=lambda i: (companions[i].side, companions[i].center))
    phis = [None] * len(companions)
    done = []
    for k in order:
        r_k = companions[k]
        idx = mu.cube_indices(r_k)
        mass_r = float(np.sum(mu.masses[idx]))
        if mass_r <= 0:
            raise DegenerateCompanion(f"companion {r_k} carries no mass.")
        previous = [j for j in done if _intersects(companions[j], r_k)]
        if previous:
            running = np.sum([np.abs(phis[j]) for j in previous], axis=0)
            l1 = float(np.sum([np.sum(np.abs(phis[j]) * mu.masses) for j in previous]))
            keep = idx[running[idx] <= 2.0 * l1 / mass_r] if l1 > 0 else idx
        else:
            keep = idx
        mass_a = float(np.sum(mu.masses[keep]))
        if mass_a <= 0:
            raise DegenerateCompanion(f"correction set inside {r_k} has zero mass.")
        alpha = np.sum(v * weights[k] * mu.masses) / mass_a
        phi = np.zeros(mu.size, dtype=np.result_type(v.dtype, float))
        phi[keep] = alpha
        phis[k] = phi
        done.append(k)
    total = np.sum([np.abs(phi) for phi in phis], axis=0) if phis else np.zeros(mu.size)
    b_used = float(np.max(total)) / lam if len(phis) else 0.0
    logger.info("corrections built for %d companions, B_used = %.4g", len(phis), b_used)
    return [FunctionOnSupport(phi) for phi in phis], b_used


def _normalized_piece(mu, ctx, values, cube, envelope, p):
    """Piece (lam, a, cube) with a at the exact size bound of its norm."""
    k = k_coeff(mu, ctx, NestedCubePair(cube, envelope))
    rho_mass = _dilated_mass(mu, cube, ctx.rho)
    if p == 1:
        size = float(np.max(np.abs(values)))
        bound = 1.0 / (rho_mass * k)
    else:
        size = float(np.sum(np.abs(values) ** p * mu.masses) ** (1.0 / p))
        bound = rho_mass ** (1.0 / p - 1.0) / k
    if size == 0:
        return None
    lam = size / bound
    return AtomicPiece(lam, FunctionOnSupport(values / lam), cube)


def cz_decompose(mu: DiscreteMeasure, ctx: AnalysisContext, f, p: float, lam: float) -> CzDecomposition:
    """
    Full decomposition f = g + sum_i b_i at level lambda.

    Parameters:
    - f (FunctionOnSupport or array): the function
    - p (float): exponent in [1, oo); blocks are H^{1,p} blocks (sup-norm blocks for p = 1)
    - lam (float): level, with lambda > beta_d * ||f||_1 / ||mu||

    Returns:
    - CzDecomposition with the certificates of cz_certificates filled in
    """
    if not 1 <= p < np.inf:
        raise ValueError(f"p must lie in [1, oo), got {p}.")
    v = function_values(mu, f)
    residuals = []
    cubes = cz_stopping_cubes(mu, ctx, f, p, lam, residuals)
    companions = cz_companions(mu, ctx, cubes)
    phis, b_used = cz_phi(mu, ctx, f, cubes, companions, lam, p) if cubes else ([], 0.0)
    weights, count = _weights(mu, cubes)

    good = np.where(count > 0, 0.0, v).astype(np.result_type(v.dtype, float))
    for phi in phis:
        good = good + phi.values

    blocks = []
    for q, r, w, phi in zip(cubes, companions, weights, phis):
        pieces = [_normalized_piece(mu, ctx, v * w, q, r, p),
                  _normalized_piece(mu, ctx, -phi.values, r, r, p)]
        blocks.append(AtomicBlock(r, [piece for piece in pieces if piece is not None]))
    h1 = float(sum(abs(piece.lam) for block in blocks for piece in block.pieces))

    decomposition = CzDecomposition(
        lam=float(lam), p=float(p), stopping_cubes=cubes, companions=companions,
        weights=[FunctionOnSupport(w) for w in weights], phis=phis, good=FunctionOnSupport(good),
        bad_blocks=blocks, h1_upper=h1, B_used=b_used, residuals=residuals,
    )
    decomposition.certificates = cz_certificates(mu, ctx, f, decomposition)
    return decomposition


def cz_certificates(mu: DiscreteMeasure, ctx: AnalysisContext, f, dec: CzDecomposition) -> dict:
    """
    Recompute every property of the decomposition on the finished object.

    Keys: reconstruction_error, cc1, cc2_residuals, cc3, cc4_error, blocks_valid,
    B_used, good_sup_over_lambda, cc6_constant, k_max, overlap, cc7_ratio, cc7_bound,
    stopping_cubes, lp_proviso (whether lambda^p > beta_d * ||f||_p^p / ||mu|| also holds).
    """
    v = function_values(mu, f)
    lam, p = dec.lam, dec.p
    fp = np.abs(v) ** p
    level = lam ** p / ctx.beta_d

    total = dec.good.values.copy()
    for w, phi in zip(dec.weights, dec.phis):
        total = total + v * w.values - phi.values
    scale = max(float(np.max(np.abs(v))) if v.size else 0.0, np.finfo(float).tiny)
    count = overlap_count(mu, dec.stopping_cubes)
    outside = count == 0

    cc4 = [abs(np.sum(phi.values * mu.masses) - np.sum(v * w.values * mu.masses))
           / max(float(np.sum(np.abs(v * w.values) * mu.masses)), np.finfo(float).tiny)
           for w, phi in zip(dec.weights, dec.phis)]
    checks = [validate_block(mu, ctx, block, p=np.inf if p == 1 else p) for block in dec.bad_blocks]
    k_values = [k_coeff(mu, ctx, NestedCubePair(q, r)) for q, r in zip(dec.stopping_cubes, dec.companions)]

    cc6 = None
    if p > 1 and dec.phis:
        q_power = 1.0 - 1.0 / p
        ratios = []
        for q, r, phi in zip(dec.stopping_cubes, dec.companions, dec.phis):
            lhs = np.sum(np.abs(phi.values) ** p * mu.masses) ** (1.0 / p) * _dilated_mass(mu, r, 1.0) ** q_power
            ratios.append(lhs * lam ** (p - 1) / _power_mass(mu, fp, q))
        cc6 = float(max(ratios))

    lp_p = float(np.sum(fp * mu.masses))
    overlap = int(np.max(count)) if count.size else 0
    cc7_ratio = dec.h1_upper * lam ** (p - 1) / lp_p if lp_p > 0 else 0.0
    cc7_bound = None
    if p > 1 and ctx.rho == 2.0 and dec.stopping_cubes:
        q_power = 1.0 - 1.0 / p
        cc7_bound = ctx.beta_d ** q_power * (max(k_values) + (12.0 * 6.0 ** ctx.n) ** q_power) * overlap

    certificates = {
        "reconstruction_error": float(np.max(np.abs(total - v)) / scale) if v.size else 0.0,
        "cc1": all(_cc1(mu, fp, q, level) for q in dec.stopping_cubes),
        "cc2_residuals": sum(1 for r in dec.residuals if r["kind"] == "cc2"),
        "cc3": bool(np.all(np.abs(v[outside]) <= lam)),
        "cc4_error": float(max(cc4)) if cc4 else 0.0,
        "blocks_valid": all(c.ok for c in checks),
        "B_used": dec.B_used,
        "good_sup_over_lambda": float(np.max(np.abs(dec.good.values))) / lam if v.size else 0.0,
        "cc6_constant": cc6,
        "k_max": float(max(k_values)) if k_values else 1.0,
        "overlap": overlap,
        "cc7_ratio": float(cc7_ratio),
        "cc7_bound": cc7_bound,
        "stopping_cubes": len(dec.stopping_cubes),
        "lp_proviso": bool(lam ** p > ctx.beta_d * lp_p / mu.total_mass),
    }
    logger.info("cz certificates: %s", certificates)
    return certificates
