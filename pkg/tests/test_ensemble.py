import json
import math

import numpy as np
import pytest

from fluidclt import ensemble as E
from fluidclt.ensemble import (
    CensoringError,
    CheckpointStats,
    EnsembleConfig,
    EnsembleStats,
    Tolerances,
    compare_report,
    prediction_table,
    run_ensemble,
    run_trial,
    splitmix64,
    trial_seed,
)
from fluidclt.models import LN2, mindeg_beta


def test_splitmix_reference_values():
    # first outputs of SplitMix64 seeded with 0
    assert trial_seed(0, 0) == 0xE220A8397B1DCDAF
    assert trial_seed(0, 1) == 0x6E789E6AA1B965F4
    assert splitmix64(0) == 0


def test_seeds_are_distinct():
    seeds = {trial_seed(42, i) for i in range(10000)}
    assert len(seeds) == 10000


def test_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(model="mindeg", n=100, trials=1, checkpoints=(0.1,))
    with pytest.raises(ValueError):
        EnsembleConfig(model="mindeg", n=100, trials=5, checkpoints=(0.3, 0.2))
    with pytest.raises(ValueError):
        EnsembleConfig(model="dproc", n=100, trials=5, stop_at_H=True)
    with pytest.raises(ValueError):
        EnsembleConfig(model="mindeg", n=100, trials=5)
    cfg = EnsembleConfig(model="mindeg", n=1000, trials=5, checkpoints=(0.25, 0.5004))
    assert cfg.steps == [250, 500]


def test_run_trial_deterministic():
    cfg = EnsembleConfig(model="dproc", n=2000, trials=4, checkpoints=(0.1, 0.2), seed=9, params={"d": 2})
    a, b = run_trial(cfg, 3), run_trial(cfg, 3)
    for x, y in zip(a.counts, b.counts):
        np.testing.assert_array_equal(x, y)
    c = run_trial(cfg, 2)
    assert any(not np.array_equal(x, y) for x, y in zip(a.counts, c.counts))


def test_run_trial_two_vertices():
    cfg = EnsembleConfig(model="mindeg", n=2, trials=2, seed=1, stop_at_H=True, params={"q": 4})
    rec = run_trial(cfg, 0)
    assert rec.H == 1
    np.testing.assert_array_equal(rec.final, [0, 1, 0, 0])


def test_dprocess_counts_sum_to_n():
    cfg = EnsembleConfig(model="dproc", n=10**4, trials=2, checkpoints=(0.2,), params={"d": 2})
    assert run_trial(cfg, 0).counts[0].sum() == 10**4


def test_two_trials_use_n_minus_1():
    cfg = EnsembleConfig(model="mindeg", n=500, trials=2, checkpoints=(0.3,), params={"q": 3})
    st = run_ensemble(cfg)
    cp = st.checkpoints[0]
    W = (cp.counts - cfg.n * prediction_table(cfg).at(0.3)[0]) / math.sqrt(cfg.n)
    d = W[0] - W[1]
    np.testing.assert_allclose(cp.cov_W, np.outer(d, d) / 2, atol=1e-12)


def test_independent_of_worker_count():
    cfg = EnsembleConfig(model="mindeg", n=3000, trials=40, checkpoints=(0.2, 0.4), seed=5, params={"q": 4})
    table = prediction_table(cfg)
    one = compare_report(run_ensemble(cfg, 1, table), table).to_json()
    three = compare_report(run_ensemble(cfg, 3, table), table).to_json()
    assert one == three


def test_mindeg_interior_mean():
    cfg = EnsembleConfig(model="mindeg", n=10**4, trials=2000, checkpoints=(0.5,), seed=42, params={"q": 4})
    cp = run_ensemble(cfg).checkpoints[0]
    x = cp.counts[:, 0] / cfg.n
    se = x.std(ddof=1) / math.sqrt(len(x))
    assert abs(x.mean() - mindeg_beta(0.5, 1)) <= 4 * se
    assert mindeg_beta(0.5, 1) == pytest.approx(0.213061, abs=1e-6)
    assert cp.samples == 2000 and cp.censored == 0


def test_at_H_run():
    cfg = EnsembleConfig(model="mindeg", n=5000, trials=50, seed=3, stop_at_H=True, params={"q": 6})
    st = run_ensemble(cfg)
    assert np.all(st.stopping.final[:, 0] == 0)
    assert abs(st.stopping.h_scaled.mean() - LN2) < 0.02
    rep = compare_report(st, prediction_table(cfg))
    assert rep.stopping["h_pred"] == LN2
    assert "row/column 1" in rep.stopping["flagged"]
    names = [c["name"] for c in rep.stopping["comparisons"]]
    assert not any(n.startswith("final_cov[1,") for n in names)


def test_all_censored_is_error():
    cfg = EnsembleConfig(model="mindeg", n=200, trials=20, checkpoints=(1.5,), params={"q": 3})
    with pytest.raises(CensoringError):
        run_ensemble(cfg, table=prediction_table(EnsembleConfig(model="mindeg", n=200, trials=20,
                                                              checkpoints=(0.5,), params={"q": 3})))


def test_censoring_warning(monkeypatch):
    real = E._gauss_path

    def flaky(n, params, ms, rng, stop_at_H=False):
        out, H, final = real(n, params, ms, rng, stop_at_H)
        if rng.random() < 0.05:
            out = [None] * len(out)
        return out, H, final

    monkeypatch.setattr(E, "_path_runner", lambda label: flaky)
    cfg = EnsembleConfig(model="gauss", n=100, trials=2000, checkpoints=(1.0,), seed=2)
    st = run_ensemble(cfg)
    cp = st.checkpoints[0]
    assert 0.01 < cp.censored / 2000 < 0.10
    assert cp.samples + cp.censored == 2000
    assert st.warnings


def test_exact_prediction_passes_with_zero_deltas():
    cfg = EnsembleConfig(model="gauss", n=400, trials=6, checkpoints=(1.0,))
    table = prediction_table(cfg)
    z, S = table.at(1.0)
    N = 6
    L = np.linalg.cholesky(S)
    c = math.sqrt((N - 1) / 2)
    W = np.concatenate([c * L.T, -c * L.T])
    counts = cfg.n * z + math.sqrt(cfg.n) * W
    cp = CheckpointStats(t=1.0, m=400, counts=counts, censored=0, mean_scaled=counts.mean(0) / cfg.n,
                         mean_W=W.mean(0), cov_W=np.cov(W.T), d2=np.zeros(N), ks=0.0)
    rep = compare_report(EnsembleStats(cfg, [cp], None, []), table, Tolerances(check_ks=False))
    assert rep.passed
    for comp in rep.checkpoints[0]["comparisons"]:
        if comp["name"] != "mahalanobis_mean":
            assert abs(comp["predicted"] - comp["observed"]) <= 1e-12


def test_synthetic_calibration():
    base = dict(model="gauss", n=500, trials=3000, checkpoints=(0.5, 1.0), seed=11)
    cfg = EnsembleConfig(params={"scale": 1.0}, **base)
    st = run_ensemble(cfg)
    assert compare_report(st, prediction_table(cfg)).passed
    wrong = EnsembleConfig(params={"scale": 1.5}, **base)
    assert not compare_report(st, prediction_table(wrong)).passed


def test_report_json_layout():
    cfg = EnsembleConfig(model="mindeg", n=2000, trials=30, checkpoints=(0.25, 0.5), seed=1, params={"q": 3})
    rep = compare_report(run_ensemble(cfg), prediction_table(cfg))
    d = json.loads(rep.to_json())
    assert list(d)[:3] == ["config", "provenance", "checkpoints"] and list(d)[-1] == "verdict"
    assert "workers" not in json.dumps(d)
    block = d["checkpoints"][0]
    for key in ("t", "mean_obs", "mean_pred", "cov_obs", "cov_pred", "mahalanobis_mean", "ks_stat", "pass"):
        assert key in block
    assert d["provenance"]["seed"] == 1 and d["provenance"]["trials"] == 30
    assert rep.verdict == ("pass" if all(b["pass"] for b in d["checkpoints"]) else "fail")


def test_prediction_table_outside_window():
    cfg = EnsembleConfig(model="dproc", n=100, trials=2, checkpoints=(0.99,), params={"d": 2}, dt=1e-3)
    with pytest.raises(ValueError):
        prediction_table(cfg)
