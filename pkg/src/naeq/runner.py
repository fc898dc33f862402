"""Task execution for scenario configs.

Each task returns a :class:`TaskOutput`: named tables (written as CSV),
named JSON documents, summary rows used by sweeps, and warnings for the
run manifest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .audit import HEURISTIC, audit_assumptions
from .config import build_game, market, solver_settings, alpha_profiles
from .dynamics import AdjustmentConfig, ReplacementConfig, run_adjustment, run_replacement
from .equilibrium import solve_alpha_equilibrium
from .errors import ConfigError, InvalidParameters, NaeqError
from .game import MULTIPLICATIVE
from .markets import (
    AdvertisingMarket,
    LinearPriceMarket,
    TeamProductionSpec,
    advertising_nae,
    price_duopoly_nae,
    price_symmetric_nae,
    team_production_nae,
)
from .merger import merger_rows
from .microfound import (
    PRNG,
    AdTargetingExperiment,
    DiscountExperiment,
    ShockDiscountSpec,
    ad_targeting_bias,
    discount_elasticity,
    shock_discount_alpha,
)
from .nae import classify_directions, solve_nae


@dataclass
class Table:
    columns: list[str]
    rows: list[dict]


@dataclass
class TaskOutput:
    tables: dict[str, Table] = field(default_factory=dict)
    documents: dict[str, dict] = field(default_factory=dict)
    summary: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _firm_columns(prefixes, n):
    return [f"{p}_{i + 1}" for p in prefixes for i in range(n)]


def _firm_values(prefix, values):
    return {f"{prefix}_{i + 1}": float(v) for i, v in enumerate(values)}


def bias_for(block: dict):
    if block.get("kind") == "advertising":
        return market(block).bias_domain()
    return MULTIPLICATIVE


# ---------------------------------------------------------------- equilibria


def task_alpha_eq(raw: dict) -> TaskOutput:
    game = build_game(raw["game"])
    inner, _ = solver_settings(raw)
    bias = bias_for(raw["game"])
    n = game.n
    rows = []
    for profile in alpha_profiles(raw):
        rep = solve_alpha_equilibrium(game, np.array(profile), inner, bias)
        rows.append({**_firm_values("alpha", profile), **_firm_values("x", rep.x),
                     **_firm_values("q", rep.demand), **_firm_values("profit", rep.profit),
                     "residual": rep.residual})
    cols = _firm_columns(("alpha", "x", "q", "profit"), n) + ["residual"]
    return TaskOutput({"alpha_equilibria.csv": Table(cols, rows)}, summary=rows)


NAE_COLUMNS = ["firm", "alpha_star", "x_star", "demand", "profit", "x_nash", "profit_nash",
               "unbiased_reply", "slope_identity_relative", "stackelberg_gap"]
NAE_SUMMARY = ["alpha_star", "x_star", "x_nash", "profit_star", "profit_nash", "alpha_min", "alpha_max"]


def closed_form_nae(block: dict):
    """Closed-form NAE for the market families that have one."""
    m = market(block)
    if isinstance(m, LinearPriceMarket):
        if block["kind"] == "symmetric-price":
            return price_symmetric_nae(m)
        if m.n == 2:
            return price_duopoly_nae(m)
        raise InvalidParameters("no closed form for an asymmetric price market with n > 2")
    if isinstance(m, AdvertisingMarket):
        return advertising_nae(m)
    if isinstance(m, TeamProductionSpec):
        return team_production_nae(m)
    raise InvalidParameters(f"no closed form for {block['kind']}")


def _nae(raw: dict, verify: bool | None = None):
    block = raw["game"]
    method = raw.get("nae", {}).get("method", "generic")
    if method not in ("generic", "closed-form"):
        raise ConfigError("nae.method must be generic or closed-form", field="nae.method")
    if method == "closed-form":
        return closed_form_nae(block), None
    game = build_game(block)
    _, outer = solver_settings(raw)
    if verify is not None:
        outer = replace(outer, verify=verify)
    return solve_nae(game, outer, bias_for(block)), game


def _nae_rows(rep) -> list[dict]:
    generic = hasattr(rep, "alpha_star")
    alpha = rep.alpha_star if generic else rep.alpha
    x = rep.x_star if generic else rep.x
    rows = []
    for i in range(len(alpha)):
        rows.append({
            "firm": i + 1,
            "alpha_star": float(alpha[i]),
            "x_star": float(x[i]),
            "demand": float(rep.demand[i]),
            "profit": float(rep.profit[i]),
            "x_nash": float(rep.x_nash[i]),
            "profit_nash": float(rep.profit_nash[i]),
            "unbiased_reply": float(rep.unbiased_reply[i]) if generic else None,
            "slope_identity_relative": float(rep.slope_identity_relative[i]) if generic else None,
            "stackelberg_gap": float(rep.stackelberg_gaps[i]) if generic else None,
        })
    return rows


def _nae_summary(rows) -> dict:
    alphas = [r["alpha_star"] for r in rows]
    r0 = rows[0]
    return {"alpha_star": r0["alpha_star"], "x_star": r0["x_star"], "x_nash": r0["x_nash"],
            "profit_star": r0["profit"], "profit_nash": r0["profit_nash"],
            "alpha_min": min(alphas), "alpha_max": max(alphas)}


def task_nae(raw: dict) -> TaskOutput:
    rep, _ = _nae(raw)
    rows = _nae_rows(rep)
    out = TaskOutput({"nae.csv": Table(NAE_COLUMNS, rows)}, summary=[_nae_summary(rows)])
    verdict = getattr(rep, "verdict", None)
    if verdict is not None and not verdict.ok:
        out.warnings.append(f"deviation check failed: gain {verdict.worst_violation:.3g}")
    return out


def _audit_doc(audit) -> dict:
    return {"passed": audit.passed, "sign_comp": audit.sign_comp, "sign_extr": audit.sign_extr,
            "sign_partial": audit.sign_partial, "witnesses": audit.witnesses,
            "margins": {k: (v if math.isfinite(v) else None) for k, v in audit.margins.items()},
            "points": audit.points, "failures": audit.failures}


def task_audit(raw: dict) -> TaskOutput:
    game = build_game(raw["game"])
    inner, _ = solver_settings(raw)
    audit = audit_assumptions(game, bias_for(raw["game"]), settings=inner)
    rows = [{"check": k, "status": v} for k, v in audit.passed.items()]
    out = TaskOutput({"audit.csv": Table(["check", "status"], rows)}, {"audit.json": _audit_doc(audit)})
    out.summary = [{**audit.passed, "sign_comp": audit.sign_comp, "sign_extr": audit.sign_extr,
                    "sign_partial": audit.sign_partial}]
    out.warnings += [f"{k} passed heuristically" for k, v in audit.passed.items() if v == HEURISTIC]
    return out


def task_verify(raw: dict) -> TaskOutput:
    """Audit, generic NAE with the deviation check, and the direction comparison."""
    raw = {**raw, "nae": {"method": "generic"}}
    game = build_game(raw["game"])
    inner, _ = solver_settings(raw)
    audit = audit_assumptions(game, bias_for(raw["game"]), settings=inner)
    rep, _ = _nae(raw, verify=True)
    rows = _nae_rows(rep)
    v = rep.verdict
    doc = {"audit": _audit_doc(audit),
           "verdict": {"ok": v.ok, "worst_violation": v.worst_violation, "worst_player": v.worst_player,
                       "worst_alpha": v.worst_alpha, "checked": v.checked,
                       "inconclusive": [list(p) for p in v.inconclusive]}}
    summary = {"verified": v.ok, "worst_violation": v.worst_violation, **_nae_summary(rows)}
    out = TaskOutput({"nae.csv": Table(NAE_COLUMNS, rows)}, {"verify.json": doc})
    if audit.definite:
        cls = classify_directions(audit, rep)
        doc["directions"] = {"predicted": cls.predicted, "observed": cls.observed,
                             "mismatches": cls.mismatches}
        summary["direction_mismatches"] = ";".join(cls.mismatches)
        if cls.mismatches:
            out.warnings.append(f"direction predictions fail on {', '.join(cls.mismatches)}")
    failed = [k for k, s in audit.passed.items() if not audit.ok(k)]
    if failed:
        out.warnings.append(f"audit failed: {', '.join(failed)}")
    out.summary = [summary]
    return out


def task_merger(raw: dict) -> TaskOutput:
    g = raw["game"]
    cs = g["c"] if isinstance(g["c"], list) else [g["c"]]
    rows = merger_rows(g["a"], g["b"], cs)
    cols = list(rows[0])
    return TaskOutput({"merger.csv": Table(cols, rows)}, summary=rows)


# ---------------------------------------------------------------- simulations


def microfound_spec(raw: dict):
    block = raw.get("microfound")
    if not isinstance(block, dict):
        raise ConfigError("simulate-microfound needs a microfound block", field="microfound")
    exp = block.get("experiment")
    params = dict(block.get("params", {}))
    reps = block.get("replications", 1)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigError("replications must be a positive integer", field="microfound.replications")
    mode = block.get("mode", "monte-carlo")
    if mode not in ("analytic", "monte-carlo"):
        raise ConfigError("mode must be analytic or monte-carlo", field="microfound.mode")
    try:
        if exp == "discount":
            spec = DiscountExperiment(**params, seed=raw.get("seed", 0))
        elif exp == "ad-targeting":
            spec = AdTargetingExperiment(**params, seed=raw.get("seed", 0))
        elif exp == "shock":
            spec = ShockDiscountSpec(**params)
        else:
            raise ConfigError("experiment must be discount, ad-targeting or shock",
                              field="microfound.experiment")
    except TypeError as exc:
        raise ConfigError(str(exc), field="microfound.params") from exc
    return exp, spec, reps, mode


def task_microfound(raw: dict) -> TaskOutput:
    exp, spec, reps, mode = microfound_spec(raw)
    if exp == "shock":
        a = shock_discount_alpha(spec)
        row = {"discount": spec.discount, "shock": spec.shock, "implied_alpha": a}
        return TaskOutput({"shock.csv": Table(list(row), [row])}, summary=[row])
    seed0 = spec.seed
    rows = []
    if exp == "discount":
        ref = discount_elasticity(spec, "analytic")
        for r in range(reps):
            res = discount_elasticity(replace(spec, seed=seed0 + r), mode)
            rows.append(_rep_row(r, seed0 + r, res.eta_hat, res.se, ref.eta_hat))
        summary = {"analytic": ref.eta_hat, "eta_true_printed": ref.eta_true_printed,
                   "eta_true_derived": ref.eta_true_derived, "implied_alpha": ref.implied_alpha}
    else:
        ref = ad_targeting_bias(spec, "analytic")
        for r in range(reps):
            res = ad_targeting_bias(replace(spec, seed=seed0 + r), mode)
            rows.append(_rep_row(r, seed0 + r, res.value, res.se, ref.value))
        summary = {"analytic": ref.value, "analytic_printed_sign": ref.printed,
                   "rising": ref.rising, "falling": ref.falling}
    est = [row["estimate"] for row in rows]
    within = [row["within_3se"] for row in rows if row["within_3se"] is not None]
    summary = {"experiment": exp, "mode": mode, "replications": reps, "mean_estimate": float(np.mean(est)),
               **summary, "share_within_3se": (sum(within) / len(within)) if within else None, "prng": PRNG}
    cols = ["replication", "seed", "estimate", "se", "analytic", "z", "within_3se"]
    return TaskOutput({"replications.csv": Table(cols, rows), "summary.csv": Table(list(summary), [summary])},
                      summary=[summary])


def _rep_row(r, seed, est, se, ref):
    z = (est - ref) / se if se else None
    return {"replication": r, "seed": seed, "estimate": est, "se": se, "analytic": ref,
            "z": z, "within_3se": (abs(z) <= 3) if z is not None else None}


def dynamics_spec(raw: dict):
    block = raw.get("dynamics")
    if not isinstance(block, dict):
        raise ConfigError("simulate-dynamics needs a dynamics block", field="dynamics")
    process = block.get("process")
    params = {k: (tuple(v) if isinstance(v, list) else v) for k, v in block.get("params", {}).items()}
    reps = block.get("replications", 1)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigError("replications must be a positive integer", field="dynamics.replications")
    try:
        if process == "replacement":
            cfg = ReplacementConfig(**params, seed=raw.get("seed", 0))
        elif process == "adjustment":
            cfg = AdjustmentConfig(**params)
            if "alpha" not in block:
                raise ConfigError("adjustment needs an alpha profile", field="dynamics.alpha")
        else:
            raise ConfigError("process must be replacement or adjustment", field="dynamics.process")
    except TypeError as exc:
        raise ConfigError(str(exc), field="dynamics.params") from exc
    return process, cfg, reps, block.get("alpha")


def task_dynamics(raw: dict) -> TaskOutput:
    process, cfg, reps, alpha = dynamics_spec(raw)
    game = build_game(raw["game"])
    inner, _ = solver_settings(raw)
    bias = bias_for(raw["game"])
    if process == "adjustment":
        res = run_adjustment(game, alpha, cfg, bias, inner)
        rows = [{"step": t, "firm": i + 1, "x": float(x[i])}
                for t, x in enumerate(res.path) for i in range(game.n)]
        summary = {"converged": res.converged, "steps": res.steps, "residual": res.residual,
                   "distance": res.distance, **_firm_values("x_final", res.path[-1])}
        return TaskOutput({"path.csv": Table(["step", "firm", "x"], rows)}, summary=[summary])
    traj, occ, summary = [], [], []
    for r in range(reps):
        res = run_replacement(game, replace(cfg, seed=cfg.seed + r), bias, inner)
        for t, i, a, x, p in res.long_rows():
            traj.append({"replication": r, "period": t, "firm": i + 1, "alpha": a, "x": x, "profit": p})
        for prof, share in res.occupancy.items():
            occ.append({"replication": r, "profile": " ".join(f"{a:g}" for a in prof), "share": share})
        summary.append({"replication": r, "seed": cfg.seed + r,
                        "modal_profile": " ".join(f"{a:g}" for a in res.modal_profile),
                        "modal_share": res.modal_share, "invalid_periods": res.invalid_periods,
                        "prng": PRNG})
    return TaskOutput({
        "trajectory.csv": Table(["replication", "period", "firm", "alpha", "x", "profit"], traj),
        "occupancy.csv": Table(["replication", "profile", "share"], occ),
        "summary.csv": Table(list(summary[0]), summary),
    }, summary=summary)


TASK_FUNCS = {
    "solve-alpha-eq": task_alpha_eq,
    "solve-nae": task_nae,
    "audit": task_audit,
    "verify": task_verify,
    "merger": task_merger,
    "simulate-microfound": task_microfound,
    "simulate-dynamics": task_dynamics,
}


def run_task(raw: dict) -> TaskOutput:
    return TASK_FUNCS[raw["task"]](raw)


def run_point(point: dict) -> tuple[list[dict], str]:
    """Summary rows of one sweep point and its status; failures become a status string."""
    try:
        return run_task(point).summary, "ok"
    except NaeqError as exc:
        return [{}], f"{type(exc).__name__}: {exc}"
