import math

import numpy as np
import pytest
from scipy.stats import norm

from latticeepi.graphs import build_graph, components_meeting, graph_epidemic
from latticeepi.meanfield import (driftless_passage_cdf,
                                  feller_em, feller_em_batch,
                                  reedfrost_run, reedfrost_run_pairwise,
                                  sis_drift, sis_meanfield_batch,
                                  sis_meanfield_run, wiener_passage,
                                  wiener_passage_batch,
                                  wiener_passage_pair_batch)
from latticeepi.rng import KeyedStreams, stable_key

from conftest import MASTER_SEED, assert_within_se, rng_for


def test_reedfrost_everyone_infected_at_start():
    run = reedfrost_run(100, 100, rng_for("rf-all"))
    assert run.total_infected == 100
    assert run.duration == 1  # one generation carries infection


def test_reedfrost_first_generation_mean():
    N, J0 = 200, 10
    reps = 30_000
    rng = rng_for("rf-mean")
    vals = np.empty(reps)
    for i in range(reps):
        run = reedfrost_run(N, J0, rng, max_gens=1)
        vals[i] = run.j_series[1]
    expect = (N - J0) * (1 - (1 - 1 / N) ** J0)
    assert_within_se(vals.mean(), expect, vals.std(ddof=1) / math.sqrt(reps), 4,
                     "E[J1]")


def test_sis_zero_stays_zero():
    run = sis_meanfield_run(500, 0, rng_for("sis0"))
    assert run.j_series == [0] and run.duration == 0


def test_sis_drift_taylor_expansion():
    # exact Binomial-mean drift vs -(3/2) j^2/N + j/(2N), error O(j^3/N^2)
    N = 10_000
    j = math.ceil(math.sqrt(N))
    exact = sis_drift(N, j)
    taylor = -1.5 * j**2 / N + j / (2 * N)
    assert abs(exact - taylor) <= 2 * j**3 / N**2


def test_sis_rescaled_path_tracks_feller_mean():
    # alpha = 1/3: the rescaled infection count is asymptotically a mean-b
    # martingale; drift bias at finite N is O(N^{-1/3}), inside 4 SE here
    N = 10**6
    alpha = 1 / 3
    J0 = round(N**alpha)
    steps = {int(t * N**alpha): t for t in (0.5, 1.0)}
    reps = 3000
    out = sis_meanfield_batch(N, J0, reps, max(steps), rng_for("sis-feller"),
                              checkpoints=tuple(steps))
    for n, t in steps.items():
        vals = out[n] / N**alpha
        assert_within_se(vals.mean(), 1.0, vals.std(ddof=1) / math.sqrt(reps), 4,
                         f"mean at t={t}")


def test_feller_absorbing_at_zero():
    path = feller_em(0.0, "none", 1e-3, 1.0, rng_for("feller0"))
    assert path.absorbed and np.all(path.values == 0.0)


def test_feller_mean_is_conserved_without_drift():
    out = feller_em_batch(1.0, "none", 1e-3, 1.0, 20_000, rng_for("feller-mean"),
                          checkpoints=(0.5, 1.0))
    for n, vals in out["at"].items():
        assert_within_se(vals.mean(), 1.0, vals.std(ddof=1) / math.sqrt(vals.size),
                         4, f"E[Y] at step {n}")


def test_feller_extinction_probability():
    # P(extinct by t=1 | b=1) = e^{-2}; oracle: critical Poisson pgf iteration
    # with k = 1/dt ancestors over k generations
    dt = 1e-4
    k = round(1 / dt)
    q = 0.0
    for _ in range(k):
        q = math.exp(q - 1.0)
    oracle = math.exp(k * math.log(q))
    assert abs(oracle - math.exp(-2)) < 2e-4
    reps = 10_000
    out = feller_em_batch(1.0, "none", dt, 1.0, reps, rng_for("feller-ext"))
    p = out["extinct"].mean()
    assert_within_se(p, oracle, math.sqrt(oracle * (1 - oracle) / reps), 3,
                     "extinction probability")


def test_wiener_level_zero():
    s = wiener_passage(0.0, "none", 1e-3, rng_for("w0"))
    assert s.tau == 0.0 and not s.censored


def test_wiener_passage_cdf_at_one():
    # P(tau_1 <= 1) = 2(1 - Phi(1)) by reflection
    reps = 10_000
    tau, cens = wiener_passage_batch(1.0, "none", 1e-4, reps,
                                     rng_for("wcdf"), horizon=1.0)
    p = ((tau <= 1.0) & ~cens).mean()
    expect = 2 * (1 - norm.cdf(1.0))
    assert_within_se(p, expect, math.sqrt(expect * (1 - expect) / reps), 3,
                     "P(tau <= 1)")
    assert driftless_passage_cdf(1.0, 1.0) == pytest.approx(expect)


def test_drift_dominates_driftless_pathwise():
    tau0, tau1 = wiener_passage_pair_batch(1.0, 1e-3, 10_000,
                                           rng_for("wdom"), horizon=12.0)
    assert np.all(tau1 <= tau0)
    grid = np.linspace(0.05, 8.0, 40)
    cdf0 = np.array([(tau0 <= t).mean() for t in grid])
    cdf1 = np.array([(tau1 <= t).mean() for t in grid])
    assert np.all(cdf1 >= cdf0)


def test_wiener_censoring_flag():
    s = wiener_passage(50.0, "none", 1e-2, rng_for("wcens"), horizon=0.5)
    assert s.censored and s.tau == 0.5


def test_reedfrost_equals_erdos_renyi_components():
    # shared keyed pair coins: generations match BFS layers on K_N percolation,
    # and the final size is the union of components meeting the seeds
    for rep in range(30):
        N = 5 + (rep % 26)
        streams = KeyedStreams(stable_key(MASTER_SEED, "rf-graph", rep))
        seeds = {0, 1} if N > 10 else {0}
        gens = reedfrost_run_pairwise(N, seeds, streams)
        g = build_graph(N, 1, "sir", streams=streams, p=1.0 / N)
        ggens = graph_epidemic(g, {(0, j) for j in seeds})
        assert [ {j for (_, j) in s} for s in ggens ] == gens
        comp = components_meeting(g, {(0, j) for j in seeds})
        assert {j for (_, j) in comp} == set().union(*gens)
        total = sum(len(s) for s in gens)
        run_u = len(set().union(*gens))
        assert total == run_u  # SIR generations are disjoint


def test_reedfrost_conservation():
    run = reedfrost_run(300, 5, rng_for("conserve"))
    assert run.total_infected <= 300  # everyone infected at most once
    assert all(j >= 0 for j in run.j_series)


def test_feller_values_nonnegative_absorbed_stays():
    path = feller_em(0.7, "minus_square", 1e-3, 3.0, rng_for("fellerabs"))
    assert (path.values >= 0).all()
    if path.absorbed:
        last = np.nonzero(path.values)[0]
        if last.size:
            assert np.all(path.values[last[-1] + 1:] == 0.0)
