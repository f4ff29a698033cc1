"""Desk-scale acceptance checks, runnable from tests and from ``fluidclt verify``.

Every check returns a :class:`CriterionResult`.  ``notes`` carries
documented mismatches (uncorrected variants of formulas that are expected to
disagree); they are reported, not counted against the verdict.
Seeds are fixed once here and never tuned.
"""

from __future__ import annotations

import subprocess
import sys
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import exact_one_step_moments
from .ensemble import EnsembleConfig, Tolerances, compare_report, prediction_table, run_ensemble
from .models import (
    LN2,
    dprocess_diffusion,
    dprocess_diffusion_pair_law,
    dprocess_drift,
    mindeg_beta,
    mindeg_diffusion,
    mindeg_drift,
    mindeg_exact_law,
    mindeg_jacobian,
    mindeg_model,
    mindeg_T_closed,
)
from .models import oracle
from .numerics import sigma_linear_closed_form, solve_augmented

__all__ = ["CriterionResult", "CRITERIA", "GROUPS", "run_criteria", "format_table"]

SEED_INTERIOR = 42
SEED_STOP = 7


@dataclass
class CriterionResult:
    number: int
    name: str
    group: str
    observed: str
    tolerance: str
    passed: bool
    runtime: float = 0.0
    budget: float = float("inf")
    notes: list = field(default_factory=list)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (f"[{flag}] {self.number}. {self.name}: {self.observed} "
                f"(tolerance {self.tolerance}; {self.runtime:.1f}s of {self.budget:.0f}s)")


def _within_budget(res: CriterionResult) -> CriterionResult:
    if res.runtime > res.budget:
        res.passed = False
        res.notes.append(f"runtime {res.runtime:.1f}s exceeds budget {res.budget:.0f}s")
    return res


# -- numerics ---------------------------------------------------------------

def criterion_1() -> CriterionResult:
    q = 6
    times = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.69]
    table = solve_augmented(mindeg_model(q), 0.69, 1e-4)
    err_z = err_T = err_lit = 0.0
    for t in times:
        i = table.nearest_index(t)
        assert abs(table.grid[i] - t) < 1e-12
        beta = np.array([mindeg_beta(t, k) for k in range(1, q + 1)])
        err_z = max(err_z, np.abs(table.z[i] - beta).max())
        err_T = max(err_T, np.abs(table.T[i] - mindeg_T_closed(t, q)).max())
        err_lit = max(err_lit, np.abs(table.T[i] - mindeg_T_closed(t, q, binomial=False)).max())
    ok = err_z <= 1e-9 and err_T <= 1e-8
    notes = [f"binomial-free T closed form differs by {err_lit:.3g} at q=6 (documented mismatch)"]
    return CriterionResult(1, "closed-form trajectory", "numerics",
                           f"max|z-beta|={err_z:.2e}, max|T-closed|={err_T:.2e}",
                           "1e-9 / 1e-8", ok, notes=notes)


def criterion_2() -> CriterionResult:
    q = 4
    model = mindeg_model(q)
    J = mindeg_jacobian(q)
    table = solve_augmented(model, LN2, 1e-4)
    worst = 0.0
    for t in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, LN2]:
        S_ode = table.Sigma[table.nearest_index(t)]
        S_cf = sigma_linear_closed_form(J, model, t, 1e-3)
        worst = max(worst, np.abs(S_ode - S_cf).max() / np.abs(S_cf).max())
    return CriterionResult(2, "two-route Sigma", "numerics", f"max relative diff={worst:.2e}",
                           "1e-6", worst <= 1e-6)


def rk4_error_ratios(t_end: float = 0.64, dts=(0.08, 0.04, 0.02), q: int = 6):
    """Ratios of successive errors against the closed forms when dt halves."""
    model = mindeg_model(q)
    beta = np.array([mindeg_beta(t_end, k) for k in range(1, q + 1)])
    T_exact = mindeg_T_closed(t_end, q)
    ez, eT = [], []
    for dt in dts:
        tab = solve_augmented(model, t_end, dt)
        ez.append(np.abs(tab.z[-1] - beta).max())
        eT.append(np.abs(tab.T[-1] - T_exact).max())
    rz = [a / b for a, b in zip(ez, ez[1:])]
    rT = [a / b for a, b in zip(eT, eT[1:])]
    return rz, rT


def criterion_3() -> CriterionResult:
    rz, rT = rk4_error_ratios()
    ratios = rz + rT
    ok = all(12.0 <= r <= 20.0 for r in ratios)
    obs = "z " + ", ".join(f"{r:.2f}" for r in rz) + "; T " + ", ".join(f"{r:.2f}" for r in rT)
    return CriterionResult(3, "RK4 order", "numerics", f"ratios {obs}", "[12, 20]", ok)


# -- models / oracle --------------------------------------------------------

def _mindeg_oracle_errors(n: int, q: int):
    """Worst drift and diffusion mismatch over reachable states of size n.

    The analytic functions are evaluated at the effective point
    ``z_k = P[V=k] / k``, where their order weights ``k z_k`` equal the
    exact choice law.
    """
    e_mean = e_second = 0.0
    for sizes in oracle.mindeg_reachable(n):
        G = oracle.mindeg_forest(sizes)
        dist = oracle.mindeg_step_distribution(G, q)
        mean, second = exact_one_step_moments(dist)
        counts = oracle.order_counts(G, q)
        p = mindeg_exact_law(counts, n)
        z_eff = p[:q] / np.arange(1, q + 1)
        e_mean = max(e_mean, np.abs(mindeg_drift(z_eff) - mean).max())
        e_second = max(e_second, np.abs(mindeg_diffusion(z_eff) - second).max())
    return e_mean, e_second


def _dprocess_oracle_errors(n: int, d: int = 2):
    """Worst mismatch of drift, pair-law diffusion and product diffusion."""
    e_mean = e_pair = e_prod = 0.0
    for G in oracle.dprocess_reachable(n, d):
        dist = oracle.dprocess_step_distribution(G, d)
        mean, second = exact_one_step_moments(dist)
        p, pi = oracle.dprocess_pair_law(G, d)
        # a point whose endpoint law is exactly p
        z_eff = np.append(p, 0.0)
        e_mean = max(e_mean, np.abs(dprocess_drift(z_eff, d, 0.0) - mean).max())
        e_pair = max(e_pair, np.abs(dprocess_diffusion_pair_law(p, pi, d) - second).max())
        e_prod = max(e_prod, np.abs(dprocess_diffusion(z_eff, d, True, 0.0) - second).max())
    return e_mean, e_pair, e_prod


def criterion_4() -> CriterionResult:
    worst_m = 0.0
    for n in range(2, 9):
        for q in sorted({4, n}):
            a, b = _mindeg_oracle_errors(n, q)
            worst_m = max(worst_m, a, b)
    worst_d = 0.0
    for n in range(2, 9):
        a, b, prod_n8 = _dprocess_oracle_errors(n)
        worst_d = max(worst_d, a, b)

    n = 8
    empty = oracle.nx.empty_graph(n)
    _, second = exact_one_step_moments(oracle.dprocess_step_distribution(empty, 2))
    e0 = np.array([1.0, 0.0, 0.0])
    uncorr = dprocess_diffusion(e0, 2, corrected=False)[0, 0]
    corrected = dprocess_diffusion(e0, 2, corrected=True)[0, 0]
    disagree = abs(uncorr - second[0, 0]) > 0.5
    ok = worst_m <= 1e-12 and worst_d <= 1e-12 and disagree and abs(corrected - second[0, 0]) <= 1e-12
    notes = [
        f"uncorrected d-process g_00 at the empty graph is {uncorr:g}, oracle {second[0, 0]:g} (documented mismatch)",
        f"product-law corrected diffusion at exact marginals differs from the oracle by up to {prod_n8:.3g} at n=8 (finite-n pair correlation)",
    ]
    return CriterionResult(4, "oracle equivalence", "models",
                           f"mindeg max err={worst_m:.1e}, dproc max err={worst_d:.1e}, "
                           f"uncorrected g_00={uncorr:g} vs oracle {second[0, 0]:g}",
                           "1e-12", ok, notes=notes)


# -- ensemble ---------------------------------------------------------------

def _summary(block) -> str:
    bad = [c["name"] for c in block["comparisons"] if not c["pass"]]
    return (f"{len(block['comparisons']) - len(bad)}/{len(block['comparisons'])} comparisons pass, "
            f"mahalanobis={block['mahalanobis_mean']:.3f}, ks={block['ks_stat']:.4f}"
            + (f", failing {bad}" if bad else ""))


def criterion_5(workers: Optional[int] = None) -> CriterionResult:
    cfg = EnsembleConfig(model="mindeg", n=10**4, trials=10**4, checkpoints=(0.5,),
                         seed=SEED_INTERIOR, params={"q": 4})
    report = compare_report(run_ensemble(cfg, workers), prediction_table(cfg))
    block = report.checkpoints[0]
    return CriterionResult(5, "CLT min-degree interior", "ensemble", _summary(block),
                           "4 SE / rel 0.10 abs 0.02 / 4 +- 5 sqrt(8/N) / 1.63/sqrt(N)",
                           report.passed)


def _cov_failures(report) -> list:
    return [c["name"] for b in report.checkpoints for c in b["comparisons"]
            if not c["pass"] and ("cov" in c["name"] or "var" in c["name"])]


def criterion_6(workers: Optional[int] = None) -> CriterionResult:
    base = dict(model="dproc", n=10**4, trials=5000, checkpoints=(0.2,), seed=SEED_INTERIOR)
    cfg = EnsembleConfig(params={"d": 2, "corrected": True}, **base)
    stats = run_ensemble(cfg, workers)
    good = compare_report(stats, prediction_table(cfg))
    uncorr_cfg = EnsembleConfig(params={"d": 2, "corrected": False}, **base)
    bad = compare_report(stats, prediction_table(uncorr_cfg))
    uncorr_fails = len(_cov_failures(bad)) > 0
    ok = good.passed and uncorr_fails
    notes = [f"uncorrected-diffusion Sigma fails the covariance test on {_cov_failures(bad)} (documented expected failure)"]
    return CriterionResult(6, "CLT d-process", "ensemble",
                           _summary(good.checkpoints[0]) + f"; uncorrected variant fails: {uncorr_fails}",
                           "4 SE / rel 0.10 abs 0.02; uncorrected must fail", ok, notes=notes)


def criterion_7(workers: Optional[int] = None) -> CriterionResult:
    cfg = EnsembleConfig(model="mindeg", n=10**5, trials=500, seed=SEED_STOP,
                         stop_at_H=True, params={"q": 6})
    stats = run_ensemble(cfg, workers)
    table = prediction_table(cfg)
    tol = Tolerances(final_cov_rel=0.15, final_cov_abs=0.0)
    report = compare_report(stats, table, tol)
    st = report.stopping
    # side report for the alternative stopping coefficients
    pred_lit = np.array(st["final_cov_pred_power2"])
    obs = np.array(st["final_cov_obs"])
    scale = np.sqrt(np.abs(np.outer(np.diag(pred_lit), np.diag(pred_lit))))[1:, 1:]
    lit_bad = int(np.sum(np.abs(obs - pred_lit)[1:, 1:] > 0.15 * scale))
    bad = [c["name"] for c in st["comparisons"] if not c["pass"]]
    obs_s = (f"h_mean={st['h_mean']:.5f}, max C_H1={int(stats.stopping.final[:, 0].max())}, "
             f"{len(st['comparisons']) - len(bad)}/{len(st['comparisons'])} comparisons pass"
             + (f", failing {bad}" if bad else ""))
    notes = [f"alternative stopping coefficients (k-1)/2^(k-1) miss rel 0.15 on {lit_bad} of 25 k>=2 entries (documented mismatch)"]
    return CriterionResult(7, "stopping time", "ensemble", obs_s,
                           "C_H1=0 exact / ln2 +- 0.01 / 4 SE / rel 0.15", report.passed, notes=notes)


def criterion_8(workers: Optional[int] = None) -> CriterionResult:
    base = dict(model="gauss", n=1000, trials=4000, checkpoints=(0.5, 1.0), seed=SEED_INTERIOR)
    cfg = EnsembleConfig(params={"scale": 1.0}, **base)
    stats = run_ensemble(cfg, workers)
    good = compare_report(stats, prediction_table(cfg))
    wrong = compare_report(stats, prediction_table(EnsembleConfig(params={"scale": 1.5}, **base)))
    ok = good.passed and not wrong.passed
    return CriterionResult(8, "harness self-test", "ensemble",
                           f"true Sigma verdict={good.verdict}, Sigma x1.5 verdict={wrong.verdict}",
                           "pass / fail", ok)


# -- cli --------------------------------------------------------------------

DETERMINISM_ARGS = ["ensemble", "--model", "mindeg", "--q", "4", "--n", "10000",
                    "--trials", "300", "--checkpoints", "0.25,0.5", "--seed", "42"]


def criterion_9() -> CriterionResult:
    outs = []
    for w in (1, 4, 1):
        proc = subprocess.run([sys.executable, "-m", "fluidclt", *DETERMINISM_ARGS, "--workers", str(w)],
                              capture_output=True)
        if proc.returncode not in (0, 3):
            return CriterionResult(9, "determinism", "cli",
                                   f"exit {proc.returncode}: {proc.stderr.decode()[-200:]}",
                                   "byte-identical", False)
        outs.append(proc.stdout)
    same = all(o == outs[0] for o in outs) and len(outs[0]) > 0
    return CriterionResult(9, "determinism", "cli",
                           f"{len(outs[0])} bytes, identical across workers 1,4,1: {same}",
                           "byte-identical", same)


CRITERIA: dict = {
    1: (criterion_1, "numerics", 5.0),
    2: (criterion_2, "numerics", 5.0),
    3: (criterion_3, "numerics", 5.0),
    4: (criterion_4, "models", 30.0),
    5: (criterion_5, "ensemble", 180.0),
    6: (criterion_6, "ensemble", 180.0),
    7: (criterion_7, "ensemble", 300.0),
    8: (criterion_8, "ensemble", 30.0),
    9: (criterion_9, "cli", 60.0),
}
GROUPS = ("numerics", "models", "ensemble", "cli")


def run_one(number: int, workers: Optional[int] = None) -> CriterionResult:
    fn, _, budget = CRITERIA[number]
    t0 = time.perf_counter()
    try:
        res = fn(workers) if "workers" in fn.__code__.co_varnames[: fn.__code__.co_argcount] else fn()
    except Exception as exc:  # reported as a failed criterion
        res = CriterionResult(number, fn.__name__, CRITERIA[number][1], f"error: {exc!r}", "-", False)
    res.runtime = time.perf_counter() - t0
    res.budget = budget
    return _within_budget(res)


def select(only=None) -> list:
    """Criterion numbers for ``only`` (group names and/or numbers)."""
    if not only:
        return sorted(CRITERIA)
    picked = set()
    for item in only:
        item = str(item).strip()
        if item.isdigit() and int(item) in CRITERIA:
            picked.add(int(item))
        elif item in GROUPS:
            picked.update(k for k, v in CRITERIA.items() if v[1] == item)
        else:
            raise ValueError(f"unknown criterion or group {item!r}; groups are {', '.join(GROUPS)}")
    return sorted(picked)


def run_criteria(only=None, workers: Optional[int] = None,
                 progress: Optional[Callable[[CriterionResult], None]] = None) -> list:
    results = []
    for k in select(only):
        res = run_one(k, workers)
        if progress is not None:
            progress(res)
        results.append(res)
    return results


def format_table(results) -> str:
    rows = [("#", "criterion", "observed", "tolerance", "result", "time")]
    for r in results:
        rows.append((str(r.number), r.name, r.observed, r.tolerance,
                     "pass" if r.passed else "FAIL", f"{r.runtime:.1f}s"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    widths[2] = min(widths[2], 90)
    lines = []
    for row in rows:
        cells = [c if len(c) <= w else c[: w - 3] + "..." for c, w in zip(row, widths)]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip())
    for r in results:
        for note in r.notes:
            lines.append(f"  note {r.number}: {note}")
    n_pass = sum(r.passed for r in results)
    lines.append(f"{n_pass}/{len(results)} criteria pass")
    return "\n".join(lines)
