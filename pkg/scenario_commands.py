# scenario_commands.py
# ---------------------
# The analysis commands a scenario can run. Every command receives the resolved
# inputs of the scenario (measure, context, function, family, seed) and the
# command parameters, and returns a CommandResult:
# - outputs: JSON-ready dictionary written into report.json
# - tables: name -> DataFrame, written as <name>.csv next to the report
# - valid: False when a checked property failed (exit code 2)
#
# Commands: growth-check, k-sweep, rbmo, jn-tail, maximal, cz, t1, curvature,
# commutator, equivalence-sweep
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from cauchy_singular import (PlanarMeasure, TruncationGrid, curvature_identity, commutator_ratio, growth_factors,
                             level_suprema, melnikov_sum, menger_curvature, pointwise_commutator_diagnostic,
                             t1_report)
from cube_coefficients import NestedCubePair, k_coeff, k_coeff_radial, n_steps, random_nested_pair
from cube_family import CubeFamily
from cz_machinery import cz_decompose
from example_measures import generate_function
from maximal_ops import evaluate_all, lp_norm, maximal_frame, sharp_ratio
from measure_core import (AnalysisContext, Cube, DiscreteMeasure, FunctionOnSupport, cube_mass, function_values,
                          support_diameter)
from oscillation_norms import (AtomicBlock, AtomicPiece, bmo_rho, circ_norm, fifi_b_norm,
                               fifi_c_norm, jn_slope, jn_tail, jn_tail_frame, pairing_check, rbmo_doublestar, rbmo_p,
                               rbmo_star, validate_block)

logger = logging.getLogger(__name__)

# relative slack for the exact pointwise dominations
_SLACK = 1e-12


@dataclass
class ScenarioInputs:
    mu: DiscreteMeasure
    ctx: AnalysisContext
    family: CubeFamily
    f: FunctionOnSupport | None = None
    seed: int = 0

    def require_function(self, command: str) -> FunctionOnSupport:
        if self.f is None:
            raise ValueError(f"command {command!r} needs a 'function' in the scenario.")
        return self.f


@dataclass
class CommandResult:
    outputs: dict
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    valid: bool = True


def _grid(inputs: ScenarioInputs, params: dict) -> TruncationGrid:
    """Truncation levels from params['epsilons'], or 2^-3 .. 2^-9 restricted to eps >= r_min."""
    if "epsilons" in params:
        return TruncationGrid(params["epsilons"]).check(inputs.mu)
    levels = [2.0 ** -k for k in range(3, 10) if 2.0 ** -k >= inputs.mu.r_min]
    return TruncationGrid(levels or [inputs.mu.r_min]).check(inputs.mu)


# ----- growth and coefficients -------------------------------------------------------


def growth_check(inputs: ScenarioInputs, params: dict) -> CommandResult:
    mu, ctx = inputs.mu, inputs.ctx
    outputs = {"c0": ctx.c0, "n": ctx.n, "points": mu.size, "r_min": mu.r_min,
               "total_mass": mu.total_mass, "diameter": support_diameter(mu)}
    valid = True
    if "expected_range" in params:
        lo, hi = params["expected_range"]
        valid = lo <= ctx.c0 <= hi
        outputs["expected_range"] = [lo, hi]
    return CommandResult(outputs, valid=valid)


def k_sweep(inputs: ScenarioInputs, params: dict) -> CommandResult:
    """K_{Q,R}, its radial variant and K / (1 + log2(l(R)/l(Q))) over random nested dyadic pairs."""
    mu, ctx = inputs.mu, inputs.ctx
    rng = np.random.default_rng(inputs.seed)
    rows = []
    for _ in range(int(params.get("pairs", 200))):
        pair = random_nested_pair(mu, rng, int(params.get("max_ratio_log2", 12)))
        k = k_coeff(mu, ctx, pair)
        log_ratio = float(np.log2(pair.outer.side / pair.inner.side))
        rows.append({"inner_side": pair.inner.side, "outer_side": pair.outer.side, "steps": n_steps(pair),
                     "k": k, "k_radial": k_coeff_radial(mu, ctx, pair), "normalized": k / (1.0 + log_ratio)})
    table = pd.DataFrame(rows)
    outputs = {"pairs": len(rows), "k_max": float(table["k"].max()),
               "normalized_min": float(table["normalized"].min()),
               "normalized_max": float(table["normalized"].max())}
    valid = True
    if "k_bound" in params:
        valid = outputs["k_max"] <= float(params["k_bound"])
    return CommandResult(outputs, {"k_sweep": table}, valid)


# ----- norms -------------------------------------------------------------------------


def rbmo(inputs: ScenarioInputs, params: dict) -> CommandResult:
    mu, ctx, family = inputs.mu, inputs.ctx, inputs.family
    f = inputs.require_function("rbmo")
    outputs = {
        "rbmo_star": rbmo_star(mu, ctx, f, family).to_dict(),
        "rbmo_doublestar": rbmo_doublestar(mu, ctx, f, family).to_dict(),
        "circ": circ_norm(mu, ctx, f, family).to_dict(),
        "fifi_b": fifi_b_norm(mu, ctx, f, family).to_dict(),
        "fifi_c": fifi_c_norm(mu, ctx, f, family).to_dict(),
    }
    for p in params.get("p_values", [2.0]):
        outputs[f"rbmo_p_{p:g}"] = rbmo_p(mu, ctx, f, family, float(p)).to_dict()
    for rho in params.get("bmo_rhos", [ctx.rho]):
        outputs[f"bmo_rho_{rho:g}"] = bmo_rho(mu, f, family, float(rho)).to_dict()
    return CommandResult(outputs)


def jn_tail_command(inputs: ScenarioInputs, params: dict) -> CommandResult:
    """Tail of the RBMO-normalized function on one cube (default: the witness of rbmo_star)."""
    mu, ctx, family = inputs.mu, inputs.ctx, inputs.family
    f = inputs.require_function("jn-tail")
    norm = rbmo_star(mu, ctx, f, family)
    if norm.value == 0:
        return CommandResult({"rbmo_star": 0.0, "slope": None})
    if "cube" in params:
        cube = Cube(params["cube"]["center"], params["cube"]["side"])
    else:
        witness = norm.witness
        cube = witness.inner if isinstance(witness, NestedCubePair) else witness
    normalized = function_values(mu, f) / norm.value
    lambdas = np.linspace(0.0, float(params.get("lambda_max", 8.0)), int(params.get("lambda_count", 33)))
    tails = jn_tail(mu, ctx, normalized, cube, lambdas)
    slope = jn_slope(tails)
    outputs = {"rbmo_star": norm.value, "cube": cube.to_dict(), "slope": slope}
    valid = True
    if "max_slope" in params:
        valid = slope <= float(params["max_slope"])
    return CommandResult(outputs, {"jn_tail": jn_tail_frame(tails)}, valid)


def pointwise_dominations(mu: DiscreteMeasure, ctx: AnalysisContext, f, family: CubeFamily) -> dict:
    """Largest excess of N f over beta_d M_(2) f and of M#|f| over 5 beta_d M# f on the support."""
    doubling = evaluate_all("doubling", mu, ctx, f, family)
    radial = evaluate_all("radial", mu, ctx, f, family, rho=2.0)
    sharp = evaluate_all("sharp", mu, ctx, f, family)
    sharp_abs = evaluate_all("sharp", mu, ctx, np.abs(function_values(mu, f)), family)
    first = doubling - ctx.beta_d * radial
    second = sharp_abs - 5.0 * ctx.beta_d * sharp
    scale = max(float(np.max(np.abs(function_values(mu, f)))), np.finfo(float).tiny)
    return {
        "doubling_over_radial": float(np.max(first)),
        "sharp_abs_over_sharp": float(np.max(second)),
        "holds": bool(np.all(first <= _SLACK * scale) and np.all(second <= _SLACK * scale)),
    }


def maximal(inputs: ScenarioInputs, params: dict) -> CommandResult:
    mu, ctx, family = inputs.mu, inputs.ctx, inputs.family
    f = inputs.require_function("maximal")
    frame = maximal_frame(mu, ctx, f, family, rho=float(params.get("rho", 2.0)), p=float(params.get("p", 2.0)),
                          eta=float(params.get("eta", 1.5)))
    dominations = pointwise_dominations(mu, ctx, f, family)
    ratios = {f"{p:g}": sharp_ratio(mu, ctx, f, family, float(p)) for p in params.get("sharp_p", [1.5, 2.0, 4.0])}
    outputs = {"dominations": dominations, "sharp_ratio": ratios,
               "lp_norms": {op: lp_norm(mu, frame[op].to_numpy(), 2.0)
                            for op in ("sharp", "doubling", "radial", "upper_radial", "p_maximal")}}
    return CommandResult(outputs, {"maximal": frame}, dominations["holds"])


# ----- Calderon-Zygmund --------------------------------------------------------------


def cz(inputs: ScenarioInputs, params: dict) -> CommandResult:
    """Decomposition at level lam (or lam_factor * ||f||_inf) with its certificates."""
    mu, ctx = inputs.mu, inputs.ctx
    f = inputs.require_function("cz")
    p = float(params.get("p", 2.0))
    v = function_values(mu, f)
    lam = float(params["lam"]) if "lam" in params else float(params.get("lam_factor", 0.5)) * float(np.max(np.abs(v)))
    dec = cz_decompose(mu, ctx, f, p, lam)
    cert = dec.certificates
    rows = [{"q_center": list(q.center), "q_side": q.side, "r_center": list(r.center), "r_side": r.side}
            for q, r in zip(dec.stopping_cubes, dec.companions)]
    valid = (cert["reconstruction_error"] <= 1e-12 and cert["cc1"] and cert["cc3"] and cert["blocks_valid"]
             and cert["cc4_error"] <= 1e-12)
    if "cc7_bound" in params:
        valid = valid and cert["cc7_ratio"] <= float(params["cc7_bound"])
    outputs = {"lambda": lam, "p": p, "blocks": len(dec.bad_blocks), "h1_upper": dec.h1_upper,
               "B_used": dec.B_used, "certificates": cert, "residuals": dec.residuals}
    return CommandResult(outputs, {"cz_cubes": pd.DataFrame(rows, columns=["q_center", "q_side", "r_center",
                                                                           "r_side"])}, valid)


# ----- Cauchy transform --------------------------------------------------------------


def t1(inputs: ScenarioInputs, params: dict) -> CommandResult:
    """
    T(1) ratio over the family and the grid, with the per-level suprema.

    Optional checks: sup_bound, require_increasing (suprema strictly increase
    along the grid) and min_growth (every ratio sup(eps_{k+growth_step}) / sup(eps_k)).
    """
    mu = inputs.mu
    grid = _grid(inputs, params)
    report = t1_report(PlanarMeasure(mu, inputs.ctx), inputs.family, grid)
    suprema = level_suprema(report)
    per_level = suprema.reset_index()
    step = int(params.get("growth_step", 1))
    factors = growth_factors(suprema, step)
    increasing = bool(np.all(np.diff(suprema.to_numpy()) > 0))
    outputs = report.to_dict()
    outputs.pop("table")
    outputs["per_level"] = per_level.to_numpy().tolist()
    outputs["strictly_increasing"] = increasing
    outputs["growth_step"] = step
    outputs["growth_factors"] = factors.tolist()
    valid = True
    if "sup_bound" in params:
        valid = report.sup <= float(params["sup_bound"])
    if params.get("require_increasing", False):
        valid = valid and increasing
    if "min_growth" in params:
        valid = valid and factors.size > 0 and float(np.min(factors)) >= float(params["min_growth"])
    return CommandResult(outputs, {"t1": report.table, "t1_levels": per_level}, valid)


def _melnikov_errors(rng: np.random.Generator, count: int) -> float:
    """Largest relative gap between the permutation sum and the squared circumradius formula."""
    worst = 0.0
    for _ in range(count):
        pts = rng.uniform(-1.0, 1.0, size=(3, 2))
        c = menger_curvature(*pts)
        if c == 0:
            continue
        z = pts[:, 0] + 1j * pts[:, 1]
        worst = max(worst, abs(melnikov_sum(*z) - c * c) / (c * c))
    return worst


def curvature(inputs: ScenarioInputs, params: dict) -> CommandResult:
    """Random (Q, a, eps) draws of the curvature identity, plus the permutation identity on random triples."""
    mu, family = inputs.mu, inputs.family
    planar = PlanarMeasure(mu, inputs.ctx)
    grid = _grid(inputs, params)
    rng = np.random.default_rng(inputs.seed)
    limit = int(params.get("max_points", 400))
    usable = [i for i, idx in enumerate(family.index) if 3 <= idx.size <= limit]
    if not usable:
        raise ValueError(f"no family cube holds between 3 and {limit} support points.")
    rows = []
    for _ in range(int(params.get("draws", 20))):
        i = usable[int(rng.integers(len(usable)))]
        eps = grid.epsilons[int(rng.integers(len(grid.epsilons)))]
        a = np.zeros(mu.size)
        a[family.index[i]] = rng.uniform(-1.0, 1.0, size=family.index[i].size)
        result = curvature_identity(planar, family.cubes[i], eps, a)
        result.update({"side": family.cubes[i].side, "eps": eps,
                       "remainder_ratio": abs(result["remainder"]) / result["scale"] if result["scale"] else 0.0})
        rows.append(result)
    table = pd.DataFrame(rows, columns=["side", "eps", "lhs", "triple", "remainder", "defect", "scale",
                                        "remainder_ratio"])
    melnikov = _melnikov_errors(rng, int(params.get("triples", 1000)))
    identity_error = float((table["defect"] / (table["lhs"].abs() + table["scale"])).max())
    outputs = {"draws": len(rows), "remainder_ratio_max": float(table["remainder_ratio"].max()),
               "identity_error_max": identity_error, "melnikov_error_max": melnikov}
    valid = identity_error <= 1e-9 and melnikov <= 1e-10
    if "remainder_bound" in params:
        valid = valid and outputs["remainder_ratio_max"] <= float(params["remainder_bound"])
    return CommandResult(outputs, {"curvature": table}, valid)


def commutator_command(inputs: ScenarioInputs, params: dict) -> CommandResult:
    """||[b, C_eps] f||_2 / ||f||_2 against rbmo_star(b); optional pointwise diagnostic."""
    mu, ctx, family = inputs.mu, inputs.ctx, inputs.family
    f = inputs.require_function("commutator")
    planar = PlanarMeasure(mu, ctx)
    b_spec = params.get("b", {"generator": "log_distance", "params": {}})
    b = generate_function(b_spec["generator"], mu, b_spec.get("params"))
    grid = _grid(inputs, params)
    eps = float(params.get("eps", grid.epsilons[-1]))
    outputs = commutator_ratio(planar, ctx, b, f, eps, family, float(params.get("p", 2.0)))
    outputs["eps"] = eps
    tables = {}
    if params.get("pointwise", False):
        frame = pointwise_commutator_diagnostic(planar, ctx, b, f, eps, family, grid, float(params.get("p", 2.0)))
        outputs["pointwise_ratio_max"] = float(frame["ratio"].max())
        tables["pointwise"] = frame
    valid = True
    if "ratio_bound" in params:
        valid = outputs["normalized"] <= float(params["ratio_bound"])
    return CommandResult(outputs, tables, valid)


# ----- equivalences ------------------------------------------------------------------


def random_block(mu: DiscreteMeasure, ctx: AnalysisContext, family: CubeFamily,
                 rng: np.random.Generator) -> AtomicBlock | None:
    """
    Two-piece block for a random nested pair Q in R of the family:
    chi_Q / (mu(rho Q) K_{Q,R}) balanced by a multiple of -chi_R / mu(rho R).
    """
    inner, outer, _ = family.all_pair_table()
    if inner.size == 0:
        return None
    t = int(rng.integers(inner.size))
    q, r = family.cubes[inner[t]], family.cubes[outer[t]]
    k = k_coeff(mu, ctx, NestedCubePair(q, r))
    rho_q = cube_mass(mu, q.dilate(ctx.rho))
    rho_r = cube_mass(mu, r.dilate(ctx.rho))
    a1 = np.zeros(mu.size)
    a1[mu.cube_indices(q)] = 1.0 / (rho_q * k)
    a2 = np.zeros(mu.size)
    a2[mu.cube_indices(r)] = -1.0 / rho_r
    lam2 = cube_mass(mu, q) * rho_r / (rho_q * k * cube_mass(mu, r))
    return AtomicBlock(r, [AtomicPiece(1.0, FunctionOnSupport(a1), q),
                           AtomicPiece(lam2, FunctionOnSupport(a2), r)])


def equivalence_sweep(inputs: ScenarioInputs, params: dict) -> CommandResult:
    """Pairwise ratios of the equivalent norms over random functions, and the block pairing bound."""
    mu, ctx, family = inputs.mu, inputs.ctx, inputs.family
    rng = np.random.default_rng(inputs.seed)
    names = ("rbmo_star", "rbmo_doublestar", "circ", "rbmo_p2")
    rows = []
    for draw in range(int(params.get("draws", 20))):
        g = rng.standard_normal(mu.size) * rng.uniform(0.1, 10.0)
        values = (rbmo_star(mu, ctx, g, family).value, rbmo_doublestar(mu, ctx, g, family).value,
                  circ_norm(mu, ctx, g, family).value, rbmo_p(mu, ctx, g, family, 2.0).value)
        rows.append({"draw": draw, **dict(zip(names, values))})
    table = pd.DataFrame(rows, columns=["draw", *names])
    ratio_rows = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ratio = table[a] / table[b]
            ratio_rows.append({"numerator": a, "denominator": b, "min": float(ratio.min()), "max": float(ratio.max())})
    ratios = pd.DataFrame(ratio_rows)
    spread = float(max(ratios["max"].max(), 1.0 / ratios["min"].min()))

    pairings, invalid = [], 0
    for _ in range(int(params.get("pairing_draws", 0))):
        block = random_block(mu, ctx, family, rng)
        if block is None:
            break
        if not validate_block(mu, ctx, block).ok:
            invalid += 1
            continue
        pairings.append(pairing_check(mu, ctx, block, rng.standard_normal(mu.size), family))
    outputs = {"draws": len(rows), "spread": spread, "invalid_blocks": invalid,
               "pairing_max": float(max(pairings)) if pairings else None}
    valid = invalid == 0
    if "spread_bound" in params:
        valid = valid and spread <= float(params["spread_bound"])
    return CommandResult(outputs, {"norms": table, "norm_ratios": ratios}, valid)


COMMANDS: dict[str, Callable[[ScenarioInputs, dict], CommandResult]] = {
    "growth-check": growth_check,
    "k-sweep": k_sweep,
    "rbmo": rbmo,
    "jn-tail": jn_tail_command,
    "maximal": maximal,
    "cz": cz,
    "t1": t1,
    "curvature": curvature,
    "commutator": commutator_command,
    "equivalence-sweep": equivalence_sweep,
}
