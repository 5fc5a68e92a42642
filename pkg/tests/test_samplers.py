import math

import numpy as np
import pytest

from pdmprare.potentials import PotentialSpec
from pdmprare.samplers import (METHODS, EstimateReport, MethodConfig,
                               ParticleSystem, effective_sample_size,
                               failure_indicator, ips_run,
                               monte_carlo_estimate, multinomial_resample,
                               replicated_experiment, run_once, smc_run,
                               ipsm_run, STATISTICS)
from pdmprare.streams import Stream
from pdmprare.systems import make_system
from support import LineModel


def test_effective_sample_size_frozen():
    ess = effective_sample_size([0.5, 0.25, 0.25], [1.0, 1.0, 1.0])
    assert ess == 2.6666666666666665
    assert effective_sample_size([0.5, 0.5], [0.0, 0.0]) == 0.0
    assert effective_sample_size([1.0], [2.0]) == 1.0


def test_multinomial_resample_counts_and_determinism():
    w = [0.6, 0.3, 0.1]
    counts = multinomial_resample(w, 20000, Stream(9).child("sel"))
    assert counts.sum() == 20000
    again = multinomial_resample(w, 20000, Stream(9).child("sel"))
    assert np.array_equal(counts, again)
    for i, p in enumerate(w):
        se = math.sqrt(p * (1 - p) / 20000)
        assert abs(counts[i] / 20000 - p) < 4 * se


def test_multinomial_resample_skips_zero_weight():
    counts = multinomial_resample([0.5, 0.0, 0.5], 5000, Stream(3))
    assert counts[1] == 0


def test_method_config_validation():
    MethodConfig().validate()
    with pytest.raises(ValueError, match="unknown method"):
        MethodConfig(method="bogus").validate()
    with pytest.raises(ValueError, match="particles"):
        MethodConfig(particles=1).validate()
    with pytest.raises(ValueError, match="steps"):
        MethodConfig(steps=0).validate()
    with pytest.raises(ValueError, match="ess_threshold"):
        MethodConfig(ess_threshold=1.5).validate()
    with pytest.raises(ValueError, match="seed"):
        MethodConfig(seed=-1).validate()
    with pytest.raises(ValueError, match="replications"):
        MethodConfig(replications=0).validate()
    assert METHODS == ("mc", "ips", "smc", "ipsm")
    assert set(STATISTICS) == {"failure", "one"}


def test_smc_without_selection_is_the_plain_mean():
    model = make_system("cold_standby")
    pot = PotentialSpec()
    mc_cfg = MethodConfig(method="mc", particles=1024, seed=5)
    smc_cfg = MethodConfig(method="smc", particles=1024, steps=1,
                           ess_threshold=0.0, seed=5)
    mc = run_once(model, pot, failure_indicator, mc_cfg, 0)
    smc = run_once(model, pot, failure_indicator, smc_cfg, 0)
    assert smc.p_hat == mc.p_hat  # bitwise, not approximately
    assert smc.resampled_flags == [False]


def test_smc_never_resampling_keeps_dyadic_mass():
    model = make_system("cold_standby")
    cfg = MethodConfig(method="smc", particles=1024, steps=4,
                       ess_threshold=0.0, seed=6)
    rep = run_once(model, PotentialSpec(), failure_indicator, cfg, 0)
    assert rep.resampled_flags == [False] * 4
    # with no selections the estimate is a count over 1024
    assert (rep.p_hat * 1024) == int(rep.p_hat * 1024)
    assert len(rep.ess_trace) == 4 and len(rep.step_potential_means) == 4


def test_smc_at_full_threshold_reproduces_ips():
    model = make_system("cold_standby")
    pot = PotentialSpec()
    for seed in (1, 2, 3):
        ips_cfg = MethodConfig(method="ips", particles=64, steps=4, seed=seed)
        smc_cfg = MethodConfig(method="smc", particles=64, steps=4,
                               ess_threshold=1.0, seed=seed)
        a = run_once(model, pot, failure_indicator, ips_cfg, 0)
        b = run_once(model, pot, failure_indicator, smc_cfg, 0)
        assert b.resampled_flags == [True] * 4
        assert a.p_hat == b.p_hat
        assert a.ess_trace == b.ess_trace
        assert a.step_potential_means == b.step_potential_means


def test_all_zero_potentials_stop_the_run():
    model = LineModel()
    dead = PotentialSpec(kind="custom", custom=lambda z, f, t: 0.0)
    cfg = MethodConfig(method="ips", particles=16, steps=3, seed=4)
    for runner in (ips_run, smc_run, ipsm_run):
        rep = runner(model, dead, failure_indicator, cfg, Stream(4))
        assert rep.stopped
        assert rep.p_hat == 0.0
        assert rep.resampled_flags == [False]
        assert len(rep.ess_trace) == 1


def _demo_room():
    return make_system("heated_room", x0=20.0, m0=("off", "off"), fail_a=0.05,
                       gamma=0.1, tf=6.0)


def test_ipsm_cluster_accounting():
    model = _demo_room()
    cfg = MethodConfig(method="ipsm", particles=64, steps=3, seed=12)
    audits = []
    run_once(model, PotentialSpec(), failure_indicator, cfg, 0,
             audit=audits.append)
    assert len(audits) == 3
    for snap in audits:
        assert isinstance(snap, ParticleSystem)
        assert snap.cluster_counts.sum() == 64
        assert abs(math.fsum(snap.weights) - 1.0) < 1e-12
        members = {}
        for i, a in enumerate(snap.ancestors):
            members.setdefault(int(a), []).append(i)
        for j, idx in members.items():
            nj = int(snap.cluster_counts[j])
            assert nj > 0
            # pinned replicate plus nj avoiding draws, or pinned alone
            assert len(idx) in (1, nj + 1)
            mass = math.fsum(snap.weights[i] for i in idx)
            assert abs(mass - nj / 64) < 1e-12


def test_ipsm_counts_degenerate_clusters():
    # the absorbing no-rate state makes the deterministic extension certain
    model = make_system("cold_standby")
    cfg = MethodConfig(method="ipsm", particles=64, steps=5, seed=8)
    rep = run_once(model, PotentialSpec(), failure_indicator, cfg, 0)
    assert rep.degenerate_clusters > 0
    assert 0.0 < rep.p_hat < 1.0


def test_run_once_is_deterministic_per_replication():
    model = make_system("cold_standby")
    cfg = MethodConfig(method="ips", particles=32, steps=3, seed=21,
                       replications=2)
    a = run_once(model, PotentialSpec(), failure_indicator, cfg, 0)
    b = run_once(model, PotentialSpec(), failure_indicator, cfg, 0)
    c = run_once(model, PotentialSpec(), failure_indicator, cfg, 1)
    assert a.p_hat == b.p_hat
    assert a.p_hat != c.p_hat


def test_replicated_experiment_aggregates():
    model = make_system("cold_standby")
    cfg = MethodConfig(method="mc", particles=200, seed=33, replications=6)
    mean, var, reports = replicated_experiment(model, PotentialSpec(),
                                               failure_indicator, cfg)
    phats = [r.p_hat for r in reports]
    assert len(reports) == 6
    assert mean == float(np.mean(phats))
    assert var == float(np.var(phats, ddof=1))
    assert all(r.seed == 33 for r in reports)


def test_replicated_experiment_worker_count_is_invisible():
    model = make_system("cold_standby")
    cfg = MethodConfig(method="ipsm", particles=32, steps=2, seed=44,
                       replications=4)
    serial = replicated_experiment(model, PotentialSpec(), failure_indicator,
                                   cfg, workers=1)
    parallel = replicated_experiment(model, PotentialSpec(), failure_indicator,
                                     cfg, workers=2)
    assert [r.p_hat for r in serial[2]] == [r.p_hat for r in parallel[2]]
    assert serial[0] == parallel[0] and serial[1] == parallel[1]


def test_monte_carlo_report_shape():
    model = make_system("cold_standby")
    cfg = MethodConfig(method="mc", particles=100, seed=2)
    rep = monte_carlo_estimate(model, failure_indicator, cfg, Stream(2))
    assert isinstance(rep, EstimateReport)
    assert rep.method == "mc"
    assert rep.ess_trace == [] and rep.resampled_flags == []
    assert 0.0 <= rep.p_hat <= 1.0
