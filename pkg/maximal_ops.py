# maximal_ops.py
# ---------------
# Pointwise maximal operators over a finite cube family.
#
# - sharp_maximal:  M#f(x), non-centered oscillation against mu(3Q/2) and K-normalized
#                   mean differences over doubling pairs Q in R with x in Q
# - doubling_maximal: Nf(x), means of |f| over doubling cubes containing x
# - radial_maximal: M_(rho)f(x), (1 / mu(rho Q)) * integral_Q |f| over Q containing x
# - upper_radial_maximal: M^(rho)f(x), (1 / mu(Q)) * integral_Q |f| over Q with x in Q / rho
# - p_maximal: M_{p,(eta)}f(x), p-means against mu(eta Q)
#
# Every operator first computes one score per cube of the family and then takes,
# for each support point, the maximum over the cubes containing it. The same
# family on both sides of an inequality makes the pointwise dominations exact.
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from cube_family import CubeFamily
from measure_core import AnalysisContext, DiscreteMeasure, function_values

logger = logging.getLogger(__name__)


@dataclass
class MaximalQuery:
    """A support point together with the family cubes that contain it."""

    x: np.ndarray
    family: CubeFamily
    cube_ids: np.ndarray = field(init=False)

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.family.mu.index_of(self.x)
        self.cube_ids = self.family.cubes_containing(self.x)


def _scatter_max(family: CubeFamily, scores: np.ndarray, index=None) -> np.ndarray:
    """Per support point: max of scores over the cubes whose index list contains it."""
    out = np.zeros(family.mu.size)
    for idx, s in zip(family.index if index is None else index, scores):
        out[idx] = np.maximum(out[idx], s)
    return out


def _at(query: MaximalQuery, scores: np.ndarray) -> float:
    return float(np.max(scores[query.cube_ids])) if query.cube_ids.size else 0.0


# ----- per-cube scores ------------------------------------------------------------


def sharp_scores(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily) -> np.ndarray:
    v = function_values(mu, f)
    w = mu.masses
    means = family.means(v)
    centers = means[family.companion]
    three_halves = family.dilate_masses(1.5)
    osc = np.array([np.sum(np.abs(v[idx] - centers[i]) * w[idx]) for i, idx in enumerate(family.index)])
    scores = osc / three_halves
    inner, outer, k = family.doubling_pair_table()
    if inner.size:
        reg = np.abs(means[inner] - means[outer]) / k
        np.maximum.at(scores, inner, reg)
    return scores


def doubling_scores(mu: DiscreteMeasure, f, family: CubeFamily) -> np.ndarray:
    v = np.abs(function_values(mu, f))
    return np.where(family.doubling, family.means(v), 0.0)


def radial_scores(mu: DiscreteMeasure, f, rho: float, family: CubeFamily) -> np.ndarray:
    return p_scores(mu, f, 1.0, rho, family)


def p_scores(mu: DiscreteMeasure, f, p: float, eta: float, family: CubeFamily) -> np.ndarray:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}.")
    v = np.abs(function_values(mu, f))
    w = mu.masses
    integrals = np.array([np.sum(v[idx] ** p * w[idx]) for idx in family.index])
    values = integrals / family.dilate_masses(eta)
    return values if p == 1.0 else values ** (1.0 / p)


def upper_radial_scores(mu: DiscreteMeasure, f, rho: float, family: CubeFamily):
    """Per family cube P: the mean of |f| over the dilate rho P."""
    v = np.abs(function_values(mu, f))
    w = mu.masses
    scores = []
    for cube in family.cubes:
        idx = mu.cube_indices(cube.dilate(rho))
        scores.append(np.sum(v[idx] * w[idx]) / np.sum(w[idx]))
    return np.array(scores)


# ----- pointwise operators --------------------------------------------------------


def sharp_maximal(mu: DiscreteMeasure, ctx: AnalysisContext, f, x, family: CubeFamily) -> float:
    """M#f(x) over the family; NotInSupport when x is not a support point."""
    return _at(MaximalQuery(x, family), sharp_scores(mu, ctx, f, family))


def doubling_maximal(mu: DiscreteMeasure, ctx: AnalysisContext, f, x, family: CubeFamily) -> float:
    return _at(MaximalQuery(x, family), doubling_scores(mu, f, family))


def radial_maximal(mu: DiscreteMeasure, f, x, rho: float, family: CubeFamily) -> float:
    return _at(MaximalQuery(x, family), radial_scores(mu, f, rho, family))


def upper_radial_maximal(mu: DiscreteMeasure, f, x, rho: float, family: CubeFamily) -> float:
    """M^(rho)f(x): sup over the dilates rho P of the family cubes P containing x."""
    return _at(MaximalQuery(x, family), upper_radial_scores(mu, f, rho, family))


def p_maximal(mu: DiscreteMeasure, f, x, p: float, eta: float, family: CubeFamily) -> float:
    return _at(MaximalQuery(x, family), p_scores(mu, f, p, eta, family))


# ----- batch evaluation -----------------------------------------------------------


def evaluate_all(operator: str, mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily,
                 rho: float = 2.0, p: float = 1.0, eta: float = 1.5) -> np.ndarray:
    """
    Values of one operator at every support point.

    Parameters:
    - operator (str): "sharp", "doubling", "radial", "upper_radial" or "p"
    - rho, p, eta (float): parameters of the radial and p-operators
    """
    if operator == "sharp":
        scores = sharp_scores(mu, ctx, f, family)
    elif operator == "doubling":
        scores = doubling_scores(mu, f, family)
    elif operator == "radial":
        scores = radial_scores(mu, f, rho, family)
    elif operator == "upper_radial":
        scores = upper_radial_scores(mu, f, rho, family)
    elif operator == "p":
        scores = p_scores(mu, f, p, eta, family)
    else:
        raise ValueError(f"unknown maximal operator {operator!r}.")
    return _scatter_max(family, scores)


def lp_norm(mu: DiscreteMeasure, values, p: float) -> float:
    """Discrete L^p(mu) norm."""
    v = np.abs(np.asarray(values))
    if np.isinf(p):
        return float(np.max(v)) if v.size else 0.0
    return float(np.sum(v ** p * mu.masses) ** (1.0 / p))


def sharp_ratio(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily, p: float) -> float:
    """||Nf||_p / ||M#f||_p; inf when M#f vanishes identically but Nf does not."""
    num = lp_norm(mu, evaluate_all("doubling", mu, ctx, f, family), p)
    den = lp_norm(mu, evaluate_all("sharp", mu, ctx, f, family), p)
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return num / den


def maximal_frame(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily, rho: float = 2.0,
                  p: float = 2.0, eta: float = 1.5) -> pd.DataFrame:
    """One row per support point with every operator evaluated on the same family."""
    frame = pd.DataFrame(mu.points, columns=[f"x{k}" for k in range(mu.d)])
    frame["f"] = np.real(function_values(mu, f))
    frame["sharp"] = evaluate_all("sharp", mu, ctx, f, family)
    frame["doubling"] = evaluate_all("doubling", mu, ctx, f, family)
    frame["radial"] = evaluate_all("radial", mu, ctx, f, family, rho=rho)
    frame["upper_radial"] = evaluate_all("upper_radial", mu, ctx, f, family, rho=rho)
    frame["p_maximal"] = evaluate_all("p", mu, ctx, f, family, p=p, eta=eta)
    logger.info("maximal operators evaluated at %d support points over %d cubes", mu.size, len(family))
    return frame
