# oscillation_norms.py
# ---------------------
# BMO-type oscillation norms of a function over a finite cube family.
#
# Every norm is the maximum of two kinds of terms:
# - oscillation: (1 / mu(rho Q)) * integral_Q |f - f_Q| over the cubes Q of the family
# - regularity: |f_Q - f_R| / K_{Q,R} over nested pairs Q in R (K <= p0 unless the
#   family was built with full_pairs)
# with f_Q a mean, a mean on the doubling companion, or a median depending on
# the formulation. Values are lower bounds of the analytic norms since the
# family is finite; comparisons between formulations on one family are exact.
#
# Also here: truncation, John-Nirenberg tails, atomic block validation and the
# H1-RBMO pairing check.
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from cube_coefficients import doubling_companion, k_coeff, NestedCubePair
from cube_family import CubeFamily, EmptyFamily
from measure_core import (AnalysisContext, Cube, DiscreteMeasure, EmptyCube, FunctionOnSupport, cube_mass,
                          function_values, weighted_lower_median)
from parallel_sweeps import ordered_map

logger = logging.getLogger(__name__)


class ZeroNorm(ValueError):
    """Raised when a pairing is requested against a function of zero norm but nonzero pairing."""


@dataclass
class NormReport:
    value: float
    witness: object
    family_size: int
    component: str = "oscillation"

    def to_dict(self) -> dict:
        out = {"value": float(self.value), "family_size": int(self.family_size), "component": self.component}
        if isinstance(self.witness, NestedCubePair):
            out["witness_center"] = list(self.witness.inner.center)
            out["witness_side"] = self.witness.inner.side
            out["witness_outer_center"] = list(self.witness.outer.center)
            out["witness_outer_side"] = self.witness.outer.side
        elif isinstance(self.witness, Cube):
            out["witness_center"] = list(self.witness.center)
            out["witness_side"] = self.witness.side
        return out


# ----- shared sweeps ------------------------------------------------------------


def _oscillations(family: CubeFamily, values: np.ndarray, centers: np.ndarray,
                  denominators: np.ndarray, p: float = 1.0) -> np.ndarray:
    """Per cube: ((1 / den_i) * integral_{Q_i} |f - c_i|^p)^(1/p)."""
    w = family.mu.masses

    def one(i):
        idx = family.index[i]
        dev = np.abs(values[idx] - centers[i])
        if p == 1.0:
            return np.sum(dev * w[idx]) / denominators[i]
        return (np.sum(dev ** p * w[idx]) / denominators[i]) ** (1.0 / p)

    return np.array(ordered_map(one, range(len(family))))


def _regularity(table, cube_values: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    inner, outer, k = table
    scale = k if weights is None else k * weights
    return np.abs(cube_values[inner] - cube_values[outer]) / scale


def _combine(family: CubeFamily, osc: np.ndarray, table, reg: np.ndarray) -> NormReport:
    i_osc = int(np.argmax(osc))
    report = NormReport(float(osc[i_osc]), family.cubes[i_osc], len(family), "oscillation")
    if reg.size:
        i_reg = int(np.argmax(reg))
        if reg[i_reg] > report.value:
            inner, outer, _ = table
            pair = NestedCubePair(family.cubes[inner[i_reg]], family.cubes[outer[i_reg]])
            report = NormReport(float(reg[i_reg]), pair, len(family), "regularity")
    return report


def _require(family: CubeFamily):
    if family is None or len(family) == 0:
        raise EmptyFamily("norm requested over an empty cube family.")


# ----- norms --------------------------------------------------------------------------


def bmo_rho(mu: DiscreteMeasure, f, family: CubeFamily, rho: float) -> NormReport:
    """max over Q of (1 / mu(rho Q)) * integral_Q |f - m_Q f|."""
    _require(family)
    v = function_values(mu, f)
    osc = _oscillations(family, v, family.means(v), family.dilate_masses(rho))
    return _combine(family, osc, None, np.empty(0))


def rbmo_star(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily) -> NormReport:
    """
    RBMO norm over the family.

    Oscillation terms use the mean on the doubling companion, m_{Q~} f, and
    mu(rho Q); regularity terms run over nested pairs of doubling cubes.
    """
    return rbmo_p(mu, ctx, f, family, 1.0)


def rbmo_p(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily, p: float) -> NormReport:
    """rbmo_star with the p-mean ((1 / mu(rho Q)) * integral_Q |f - m_{Q~} f|^p)^(1/p) as oscillation."""
    _require(family)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}.")
    v = function_values(mu, f)
    means = family.means(v)
    osc = _oscillations(family, v, means[family.companion], family.dilate_masses(ctx.rho), float(p))
    table = family.doubling_pair_table()
    return _combine(family, osc, table, _regularity(table, means))


def rbmo_doublestar(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily) -> NormReport:
    """Norm with the numbers f_Q = m_{Q~} f in both conditions, pairs over all nested cubes."""
    _require(family)
    v = function_values(mu, f)
    f_q = family.means(v)[family.companion]
    osc = _oscillations(family, v, f_q, family.dilate_masses(ctx.rho))
    table = family.all_pair_table()
    return _combine(family, osc, table, _regularity(table, f_q))


def alpha_median(mu: DiscreteMeasure, f, cube: Cube) -> float:
    """Lower weighted median of f on the cube: minimizes m_Q(|f - alpha|)."""
    v = function_values(mu, f)
    idx = mu.cube_indices(cube)
    if idx.size == 0:
        raise EmptyCube(f"cube {cube} carries no mass.")
    return weighted_lower_median(np.real(v[idx]), mu.masses[idx])


def circ_norm(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily) -> NormReport:
    """Median formulation: alpha_{Q~}(f) against mu(2Q), regularity |alpha_Q - alpha_R| / K."""
    _require(family)
    v = np.real(function_values(mu, f))
    med = family.medians(v)
    osc = _oscillations(family, v, med[family.companion], family.dilate_masses(2.0))
    table = family.doubling_pair_table()
    return _combine(family, osc, table, _regularity(table, med))


def fifi_b_norm(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily) -> NormReport:
    """
    Characterization with plain means: (1 / mu(rho Q)) * integral_Q |f - m_Q f| and
    |m_Q f - m_R f| / (K_{Q,R} * (mu(rho Q)/mu(Q) + mu(rho R)/mu(R))) over all nested pairs.
    """
    _require(family)
    v = function_values(mu, f)
    means = family.means(v)
    rho_mass = family.dilate_masses(ctx.rho)
    osc = _oscillations(family, v, means, rho_mass)
    table = family.all_pair_table()
    ratio = rho_mass / family.mass
    weights = ratio[table[0]] + ratio[table[1]]
    return _combine(family, osc, table, _regularity(table, means, weights))


def fifi_c_norm(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily) -> NormReport:
    """Characterization on doubling cubes only: (1 / mu(Q)) * integral_Q |f - m_Q f| and |m_Q - m_R| / K."""
    _require(family)
    v = function_values(mu, f)
    means = family.means(v)
    osc = _oscillations(family, v, means, family.mass)
    osc = np.where(family.doubling, osc, 0.0)
    table = family.doubling_pair_table()
    return _combine(family, osc, table, _regularity(table, means))


def truncate(f, q: float) -> FunctionOnSupport:
    """f where |f| <= q, q * f / |f| elsewhere."""
    if not q > 0:
        raise ValueError(f"truncation level must be positive, got {q}.")
    v = f.values if isinstance(f, FunctionOnSupport) else np.asarray(f)
    mag = np.abs(v)
    scale = np.where(mag > q, q / np.where(mag > 0, mag, 1.0), 1.0)
    return FunctionOnSupport(v * scale)


def jn_tail(mu: DiscreteMeasure, ctx: AnalysisContext, f, cube: Cube, lambdas) -> list[tuple[float, float]]:
    """
    Distribution tail mu{x in Q : |f(x) - f_Q| > lambda} / mu(rho Q) with f_Q = m_{Q~} f.

    Returns:
    - list of (lambda, tail), in the order of `lambdas`
    """
    v = function_values(mu, f)
    idx = mu.cube_indices(cube)
    if idx.size == 0:
        raise EmptyCube(f"cube {cube} carries no mass.")
    companion = doubling_companion(mu, ctx, cube)
    c_idx = mu.cube_indices(companion)
    f_q = np.sum(v[c_idx] * mu.masses[c_idx]) / np.sum(mu.masses[c_idx])
    dev = np.abs(v[idx] - f_q)
    rho_mass = cube_mass(mu, cube.dilate(ctx.rho))
    out = []
    for lam in lambdas:
        out.append((float(lam), float(np.sum(mu.masses[idx][dev > lam]) / rho_mass)))
    return out


def jn_tail_frame(tails) -> pd.DataFrame:
    return pd.DataFrame(tails, columns=["lambda", "tail"])


def jn_slope(tails) -> float:
    """Least-squares slope of log(tail) against lambda over the positive part of the tail."""
    frame = jn_tail_frame(tails)
    frame = frame[frame["tail"] > 0]
    if len(frame) < 2:
        return float("-inf")
    return float(np.polyfit(frame["lambda"].to_numpy(), np.log(frame["tail"].to_numpy()), 1)[0])


# ----- atomic blocks -------------------------------------------------------------


@dataclass
class AtomicPiece:
    lam: float
    a: FunctionOnSupport
    cube: Cube


@dataclass
class AtomicBlock:
    """Mean-zero function b = sum_j lam_j * a_j with every a_j supported on Q_j, Q_j inside the envelope R."""

    envelope: Cube
    pieces: list[AtomicPiece] = field(default_factory=list)

    def function(self, mu: DiscreteMeasure) -> np.ndarray:
        out = np.zeros(mu.size)
        for piece in self.pieces:
            out = out + piece.lam * function_values(mu, piece.a)
        return out

    def to_dict(self) -> dict:
        return {
            "envelope": self.envelope.to_dict(),
            "pieces": [{"lambda": float(p.lam), "cube": p.cube.to_dict(), "a": p.a.to_dict()} for p in self.pieces],
        }


@dataclass
class BlockValidation:
    value: float
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_block(mu: DiscreteMeasure, ctx: AnalysisContext, block: AtomicBlock, tol: float = 1e-12,
                   p: float = np.inf) -> BlockValidation:
    """
    Check the atomic block conditions and return sum_j |lam_j| with the list of violations.

    Parameters:
    - tol (float): relative tolerance for the integral and the size bounds
    - p (float): np.inf checks ||a_j||_inf <= (mu(rho Q_j) K_{Q_j,R})^-1; a finite p checks
      ||a_j||_{L^p} <= mu(rho Q_j)^(1/p - 1) K_{Q_j,R}^-1

    Kinds of violation: "cube outside envelope", "support outside cube",
    "nonzero integral", "size bound".
    """
    violations = []
    integral = 0.0
    scale = 0.0
    for j, piece in enumerate(block.pieces):
        values = function_values(mu, piece.a)
        inside = np.zeros(mu.size, dtype=bool)
        inside[mu.cube_indices(piece.cube)] = True
        if np.any(values[~inside] != 0):
            violations.append({"piece": j, "kind": "support outside cube"})
        if not block.envelope.contains(piece.cube):
            violations.append({"piece": j, "kind": "cube outside envelope"})
            k = np.inf
        else:
            k = k_coeff(mu, ctx, NestedCubePair(piece.cube, block.envelope))
        integral = integral + piece.lam * np.sum(values * mu.masses)
        sup = float(np.max(np.abs(values))) if values.size else 0.0
        scale += abs(piece.lam) * sup * cube_mass(mu, piece.cube)

        rho_mass = cube_mass(mu, piece.cube.dilate(ctx.rho))
        if np.isinf(p):
            size, bound = sup, 1.0 / (rho_mass * k)
        else:
            size = float(np.sum(np.abs(values) ** p * mu.masses) ** (1.0 / p))
            bound = rho_mass ** (1.0 / p - 1.0) / k
        if size > bound * (1.0 + tol):
            violations.append({"piece": j, "kind": "size bound", "size": size, "bound": float(bound)})

    if abs(integral) > tol * scale:
        violations.append({"piece": None, "kind": "nonzero integral", "integral": float(abs(integral)),
                           "scale": float(scale)})
    value = float(sum(abs(piece.lam) for piece in block.pieces))
    if violations:
        logger.warning("atomic block with envelope %s: %d violations", block.envelope, len(violations))
    return BlockValidation(value, violations)


def h1_upper(validations) -> float:
    """Upper bound of the H1 norm of a sum of blocks: the sum of their block norms."""
    return float(sum(v.value for v in validations))


def pairing_check(mu: DiscreteMeasure, ctx: AnalysisContext, block: AtomicBlock, g, family: CubeFamily,
                  tol: float = 1e-12) -> float:
    """|integral b g| / (|b|_H1 * rbmo_star(g)); 0 when the pairing vanishes."""
    check = validate_block(mu, ctx, block, tol)
    if not check.ok:
        raise ValueError(f"pairing needs a valid atomic block, got violations {check.violations}.")
    gv = function_values(mu, g)
    b = block.function(mu)
    pairing = abs(np.sum(b * gv * mu.masses))
    pairing_scale = float(np.sum(np.abs(b * gv) * mu.masses))
    norm = rbmo_star(mu, ctx, g, family).value
    g_scale = float(np.max(np.abs(gv))) if gv.size else 0.0
    if norm <= tol * g_scale or norm == 0:
        if pairing <= 1e-9 * max(pairing_scale, np.finfo(float).tiny):
            return 0.0
        raise ZeroNorm(f"rbmo_star(g) vanishes on the family but the pairing is {pairing:g}.")
    if check.value == 0:
        return 0.0
    return float(pairing / (check.value * norm))
