"""Monte Carlo ensembles of process trials and comparison with the ODE.

Each trial draws from its own generator seeded by a SplitMix64 mix of the
master seed and the trial index, and results are collected in trial
order, so an ensemble is a pure function of its config whatever the
number of worker threads.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .core import DomainBox, ProcessModel, in_domain
from .models import LN2, get_model, get_path_runner, mindeg_final_sigma, mindeg_mu
from .numerics import TrajectoryTable, solve_augmented
from .stats import empirical_moments, ks_statistic, mahalanobis_check

log = logging.getLogger(__name__)

__all__ = [
    "EnsembleConfig",
    "CheckpointStats",
    "StoppingStats",
    "EnsembleStats",
    "Tolerances",
    "Report",
    "CensoringError",
    "splitmix64",
    "trial_seed",
    "gauss_model",
    "build_model",
    "prediction_table",
    "run_trial",
    "run_ensemble",
    "compare_report",
    "DEGENERATE_VAR",
]

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
DEGENERATE_VAR = 1e-8


class CensoringError(RuntimeError):
    pass


def splitmix64(x: int) -> int:
    z = x & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master: int, index: int) -> int:
    """Output ``index`` of a SplitMix64 stream started at ``master``."""
    return splitmix64((master + (index + 1) * GOLDEN_GAMMA) & MASK64)


# -- synthetic calibration model ------------------------------------------

_GAUSS_COV = np.array([[0.50, 0.20, -0.10],
                       [0.20, 0.40, 0.05],
                       [-0.10, 0.05, 0.30]])
_GAUSS_DRIFT = np.array([0.3, -0.2, 0.1])
_GAUSS_Z0 = np.array([0.5, 0.5, 0.5])


def gauss_model(scale: float = 1.0) -> ProcessModel:
    """Constant drift with i.i.d. Gaussian increments, so ``Sigma(t) = S t``.

    ``scale`` multiplies the increment covariance on the analytic side
    only; the simulator always uses the true one.
    """
    S = scale * _GAUSS_COV
    G = S + np.outer(_GAUSS_DRIFT, _GAUSS_DRIFT)
    q = len(_GAUSS_Z0)
    return ProcessModel(
        q=q,
        drift=lambda z: _GAUSS_DRIFT.copy(),
        diffusion=lambda z: G,
        jacobian=lambda z: np.zeros((q, q)),
        domain=DomainBox.uniform(q, -100.0, 100.0, 0.1),
        z0=_GAUSS_Z0,
        label="gauss",
        params={"scale": scale},
    )


def _gauss_path(n, params, ms, rng, stop_at_H=False):
    if stop_at_H:
        raise ValueError("the synthetic model has no stopping time")
    L = np.linalg.cholesky(_GAUSS_COV)
    x = n * _GAUSS_Z0
    prev = 0
    out = []
    for m in ms:
        k = m - prev
        x = x + k * _GAUSS_DRIFT + math.sqrt(k) * (L @ rng.standard_normal(len(x)))
        out.append(x.copy())
        prev = m
    return out, None, None


def _path_runner(label):
    if label == "gauss":
        return _gauss_path
    return get_path_runner(label)


def build_model(label: str, params: dict) -> ProcessModel:
    if label == "gauss":
        return gauss_model(params.get("scale", 1.0))
    return get_model(label, **params)


# -- config and results ---------------------------------------------------

@dataclass(frozen=True)
class EnsembleConfig:
    model: str
    n: int
    trials: int
    checkpoints: tuple = ()
    seed: int = 0
    stop_at_H: bool = False
    params: dict = field(default_factory=dict)
    dt: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "checkpoints", tuple(float(t) for t in self.checkpoints))
        if self.trials < 2:
            raise ValueError("need at least two trials")
        if self.n < 2:
            raise ValueError("need n >= 2")
        if any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ValueError("checkpoints must be strictly ascending")
        if any(t < 0 for t in self.checkpoints):
            raise ValueError("checkpoints must be non-negative")
        if self.stop_at_H and self.model != "mindeg":
            raise ValueError("stopping at H is only defined for the min-degree process")
        if not self.checkpoints and not self.stop_at_H:
            raise ValueError("nothing to record: give checkpoints or stop at H")

    @property
    def steps(self) -> list:
        return [int(round(t * self.n)) for t in self.checkpoints]

    @property
    def t_end(self) -> float:
        ends = list(self.checkpoints)
        if self.stop_at_H:
            ends.append(LN2)
        return max(ends)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checkpoints"] = list(self.checkpoints)
        return d


@dataclass
class TrialRecord:
    index: int
    counts: list
    H: Optional[int] = None
    final: Optional[np.ndarray] = None


@dataclass
class CheckpointStats:
    t: float
    m: int
    counts: np.ndarray          # (samples, q) raw counts of kept trials
    censored: int
    mean_scaled: np.ndarray     # mean of X / n
    mean_W: np.ndarray
    cov_W: np.ndarray
    d2: np.ndarray              # squared Mahalanobis distance per kept trial
    ks: float

    @property
    def samples(self) -> int:
        return self.counts.shape[0]


@dataclass
class StoppingStats:
    n: int
    H: np.ndarray
    final: np.ndarray           # (trials, q) counts at H

    @property
    def h_scaled(self) -> np.ndarray:
        return self.H / float(self.n)


@dataclass
class EnsembleStats:
    config: EnsembleConfig
    checkpoints: list
    stopping: Optional[StoppingStats]
    warnings: list


def run_trial(config: EnsembleConfig, trial_index: int) -> TrialRecord:
    rng = np.random.default_rng(trial_seed(config.seed, trial_index))
    runner = _path_runner(config.model)
    counts, H, final = runner(config.n, config.params, config.steps, rng, config.stop_at_H)
    return TrialRecord(trial_index, counts, H, final)


def _run_chunk(config, indices):
    return [run_trial(config, i) for i in indices]


def prediction_table(config: EnsembleConfig, model: Optional[ProcessModel] = None) -> TrajectoryTable:
    model = model if model is not None else build_model(config.model, config.params)
    table = solve_augmented(model, config.t_end, config.dt)
    if table.t_final < config.t_end - 1e-12:
        raise ValueError(f"the ODE leaves the domain at t={table.t_final:.4g}, "
                         f"before the last checkpoint {config.t_end:.4g}")
    return table


def _standardized(counts, n, z):
    return (counts - n * z) / math.sqrt(n)


def _first_coordinate_ks(W, var, n, integer):
    if not var > DEGENERATE_VAR:
        return float("nan")
    s = math.sqrt(var)
    lattice = 1.0 / (math.sqrt(n) * s) if integer else 0.0
    return ks_statistic(W[:, 0] / s, lattice)


def run_ensemble(config: EnsembleConfig, workers: Optional[int] = None,
                 table: Optional[TrajectoryTable] = None) -> EnsembleStats:
    """Run all trials and reduce them against the predicted trajectory.

    Trials whose counts leave the model domain at a checkpoint, or that
    end before it (d-process saturation, min-degree H), are censored from
    that checkpoint on.  More than 1% censored raises a warning entry,
    more than 10% a :class:`CensoringError`.
    """
    model = build_model(config.model, config.params)
    if table is None:
        table = prediction_table(config, model)
    integer = config.model != "gauss"

    N = config.trials
    if workers is None or workers < 1:
        workers = 1
    chunk = max(1, math.ceil(N / (4 * workers)))
    batches = [range(a, min(a + chunk, N)) for a in range(0, N, chunk)]
    if workers == 1:
        results = [_run_chunk(config, b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda b: _run_chunk(config, b), batches))
    records = [r for batch in results for r in batch]

    n = config.n
    warnings = []
    cps = []
    alive = np.ones(N, dtype=bool)
    for c, (t, m) in enumerate(zip(config.checkpoints, config.steps)):
        for r in records:
            x = r.counts[c]
            if x is None or not in_domain(np.asarray(x) / n, model.domain):
                alive[r.index] = False
        kept = np.array([records[i].counts[c] for i in range(N) if alive[i]], dtype=float)
        censored = N - len(kept)
        frac = censored / N
        if frac > 0.10:
            raise CensoringError(f"{censored} of {N} trials censored at t={t}")
        if frac > 0.01:
            msg = f"{censored} of {N} trials censored at t={t}"
            log.warning(msg)
            warnings.append(msg)
        if len(kept) < 2:
            raise CensoringError(f"fewer than two trials reach t={t}")
        z, S = table.at(m / n)
        W = _standardized(kept, n, z)
        mean_W, cov_W = empirical_moments(W)
        cps.append(CheckpointStats(
            t=t, m=m, counts=kept, censored=censored,
            mean_scaled=kept.mean(axis=0) / n, mean_W=mean_W, cov_W=cov_W,
            d2=mahalanobis_check(W, S).d2,
            ks=_first_coordinate_ks(W, S[0, 0], n, integer),
        ))

    stopping = None
    if config.stop_at_H:
        H = np.array([r.H for r in records], dtype=np.int64)
        final = np.array([r.final for r in records], dtype=float)
        stopping = StoppingStats(n=n, H=H, final=final)
    return EnsembleStats(config=config, checkpoints=cps, stopping=stopping, warnings=warnings)


# -- comparison -----------------------------------------------------------

@dataclass(frozen=True)
class Tolerances:
    mean_se: float = 4.0
    cov_rel: float = 0.10
    cov_abs: float = 0.02
    mahalanobis_width: float = 5.0
    ks_coef: float = 1.63
    h_abs: float = 0.01
    final_cov_rel: float = 0.15
    final_cov_abs: float = 0.0
    check_mahalanobis: bool = True
    check_ks: bool = True


def _cmp(name, predicted, observed, tol, passed):
    return {"name": name, "predicted": float(predicted), "observed": float(observed),
            "tolerance": float(tol), "pass": bool(passed)}


def _mean_comparisons(prefix, counts, n, pred, k_sel, tol_se):
    out = []
    scaled = counts / n
    N = scaled.shape[0]
    obs = scaled.mean(axis=0)
    sd = scaled.std(axis=0, ddof=1)
    for k in k_sel:
        tol = max(tol_se * sd[k] / math.sqrt(N), 1e-12)
        out.append(_cmp(f"{prefix}mean[{k + 1}]", pred[k], obs[k], tol, abs(obs[k] - pred[k]) <= tol))
    return out


def _cov_comparisons(prefix, cov_obs, cov_pred, rel, abs_tol, coords):
    out = []
    S = cov_pred
    # a negative predicted variance is a wrong model, not a degenerate one
    live = [k for k in coords if abs(S[k, k]) > DEGENERATE_VAR]
    dead = [k for k in coords if abs(S[k, k]) <= DEGENERATE_VAR]
    for a, i in enumerate(live):
        for j in live[a:]:
            tol = max(abs_tol, rel * math.sqrt(abs(S[i, i] * S[j, j])))
            diff = abs(cov_obs[i, j] - S[i, j])
            out.append(_cmp(f"{prefix}cov[{i + 1},{j + 1}]", S[i, j], cov_obs[i, j], tol, diff <= tol))
    for k in dead:
        tol = max(abs_tol, 1e-12)
        out.append(_cmp(f"{prefix}var[{k + 1}] (degenerate)", S[k, k], cov_obs[k, k], tol,
                        abs(cov_obs[k, k]) <= tol))
    return out


def compare_report(stats: EnsembleStats, table: TrajectoryTable,
                   tolerances: Tolerances = Tolerances()) -> "Report":
    """Compare empirical statistics with the predictions in ``table``.

    Observed fluctuations are re-standardized against the table's mean
    path, so any table (e.g. one built from a different second-moment
    function) can be checked against the same simulated counts.
    """
    cfg = stats.config
    n = cfg.n
    tol = tolerances
    integer = cfg.model != "gauss"
    blocks = []
    for cp in stats.checkpoints:
        z, S = table.at(cp.m / n)
        W = _standardized(cp.counts, n, z)
        _, cov_obs = empirical_moments(W)
        q = W.shape[1]
        comps = _mean_comparisons("", cp.counts, n, z, range(q), tol.mean_se)
        comps += _cov_comparisons("", cov_obs, S, tol.cov_rel, tol.cov_abs, range(q))
        maha = mahalanobis_check(W, S, tol.mahalanobis_width)
        if tol.check_mahalanobis:
            comps.append(_cmp("mahalanobis_mean", maha.rank, maha.mean, maha.window, maha.passed))
        ks = _first_coordinate_ks(W, S[0, 0], n, integer)
        ks_limit = tol.ks_coef / math.sqrt(cp.samples)
        if tol.check_ks:
            comps.append(_cmp("ks_first_coordinate", 0.0, ks, ks_limit, ks <= ks_limit))
        blocks.append({
            "t": cp.t,
            "m": cp.m,
            "samples": cp.samples,
            "censored": cp.censored,
            "mean_obs": (cp.counts.mean(axis=0) / n).tolist(),
            "mean_pred": z.tolist(),
            "cov_obs": cov_obs.tolist(),
            "cov_pred": S.tolist(),
            "mahalanobis_mean": maha.mean,
            "mahalanobis_rank": maha.rank,
            "mahalanobis_window": maha.window,
            "chi2_99_exceed_fraction": maha.exceed_fraction,
            "ks_stat": ks,
            "ks_limit": ks_limit,
            "comparisons": comps,
            "pass": all(c["pass"] for c in comps),
        })

    stopping = None
    if stats.stopping is not None:
        st = stats.stopping
        q = st.final.shape[1]
        h_obs = float(np.mean(st.h_scaled))
        comps = [_cmp("h_mean", LN2, h_obs, tol.h_abs, abs(h_obs - LN2) <= tol.h_abs)]
        mu = np.array([mindeg_mu(k) for k in range(1, q + 1)])
        comps.append(_cmp("final_isolated_max", 0.0, st.final[:, 0].max(), 0.0,
                          bool(np.all(st.final[:, 0] == 0))))
        comps += _mean_comparisons("final_", st.final, n, mu, range(q), tol.mean_se)
        i_h = table.nearest_index(LN2)
        if abs(table.grid[i_h] - LN2) > 1e-12:
            raise ValueError("prediction table does not reach ln 2")
        W = _standardized(st.final, n, table.z[i_h])
        _, cov_obs = empirical_moments(W)
        pred = mindeg_final_sigma(table.Sigma[i_h], q)
        coords = range(1, q)
        comps += _cov_comparisons("final_", cov_obs, pred, tol.final_cov_rel, tol.final_cov_abs, coords)
        stopping = {
            "h_mean": h_obs,
            "h_pred": LN2,
            "h_sd": float(np.std(st.h_scaled, ddof=1)),
            "final_mean_obs": (st.final.mean(axis=0) / n).tolist(),
            "final_mean_pred": mu.tolist(),
            "final_cov_obs": cov_obs.tolist(),
            "final_cov_pred": pred.tolist(),
            "final_cov_pred_power2": mindeg_final_sigma(table.Sigma[i_h], q, form="power2").tolist(),
            "flagged": "row/column 1 is degenerate (C_H,1 = 0); covariance tested for k >= 2 only",
            "comparisons": comps,
            "pass": all(c["pass"] for c in comps),
        }

    verdict = all(b["pass"] for b in blocks) and (stopping is None or stopping["pass"])
    return Report(config=cfg.to_dict(), checkpoints=blocks, stopping=stopping,
                  verdict="pass" if verdict else "fail", warnings=list(stats.warnings))


@dataclass
class Report:
    config: dict
    checkpoints: list
    stopping: Optional[dict]
    verdict: str
    warnings: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def failures(self) -> list:
        out = [c for b in self.checkpoints for c in b["comparisons"] if not c["pass"]]
        if self.stopping:
            out += [c for c in self.stopping["comparisons"] if not c["pass"]]
        return out

    def provenance(self) -> dict:
        import numba
        import scipy
        return {
            "seed": self.config["seed"],
            "dt": self.config["dt"],
            "n": self.config["n"],
            "trials": self.config["trials"],
            "versions": {"fluidclt": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "numba": numba.__version__},
        }

    def to_dict(self) -> dict:
        out = {"config": self.config, "provenance": self.provenance(),
               "checkpoints": self.checkpoints}
        if self.stopping is not None:
            out["stopping"] = self.stopping
        out["warnings"] = self.warnings
        out["verdict"] = self.verdict
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True) + "\n"
