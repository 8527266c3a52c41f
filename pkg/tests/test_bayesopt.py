import numpy as np
import pytest
from conftest import borehole_data, random_dataset, small_schema
from scipy import integrate, stats

from lmgp.bayesopt import (
    MAXIMIZE,
    MINIMIZE,
    Budget,
    CandidatePool,
    PoolExhausted,
    bo_run,
    bo_step,
    expected_improvement,
    load_candidate_csv,
    random_search_run,
    write_trajectory_csv,
)
from lmgp.data import ParseError
from lmgp.optimize import FitConfig

FAST = FitConfig(n_starts=2, max_iter=40)


class FixedModel:
    """Stand-in model with prescribed predictive moments per pool row."""

    def __init__(self, pool, mu, var):
        self.rows = {tuple(np.r_[x, t]): i for i, (x, t) in enumerate(zip(pool.data.X, pool.data.T))}
        self.mu, self.var = np.asarray(mu, float), np.asarray(var, float)

    def predict(self, X, T):
        idx = [self.rows[tuple(np.r_[x, t])] for x, t in zip(X, T)]
        return self.mu[idx], self.var[idx]


def _pool(n, seed=0, evaluated=()):
    d = random_dataset(small_schema(), n, seed=seed)
    ev = np.zeros(n, bool)
    ev[list(evaluated)] = True
    return CandidatePool(d, ev)


def test_ei_reference_values():
    assert expected_improvement(1.0, 0.0, 1.0) == 0.0
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(0.398942, abs=1e-6)
    assert expected_improvement(2.0, 0.0, 1.0) == 1.0
    assert expected_improvement(2.0, 0.0, 1.0, MINIMIZE) == 0.0
    with pytest.raises(ValueError):
        expected_improvement(0.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        expected_improvement(0.0, 1.0, 0.0, "up")


@pytest.mark.parametrize("direction", [MAXIMIZE, MINIMIZE])
def test_ei_matches_monte_carlo(direction):
    rng = np.random.default_rng(5)
    s = 1.0 if direction == MAXIMIZE else -1.0
    for _ in range(5):
        mu, sd, yb = rng.normal(), rng.uniform(0.1, 2), rng.normal()
        draws = np.maximum(s * (rng.normal(mu, sd, 10 ** 6) - yb), 0)
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(expected_improvement(mu, sd, yb, direction) - draws.mean()) < 3 * se


def test_ei_nonnegative_and_monotone_in_sigma():
    sig = np.linspace(0, 5, 200)
    for mu in (-2.0, 0.0, 0.7):
        ei = expected_improvement(np.full_like(sig, mu), sig, 0.3)
        assert np.all(ei >= 0)
        assert np.all(np.diff(ei) >= -1e-15)
        assert expected_improvement(mu, 1e-12, 0.3) == pytest.approx(max(mu - 0.3, 0), abs=1e-10)


def test_bo_step_single_candidate():
    pool = _pool(4, evaluated=(0, 1, 3))
    m = FixedModel(pool, [0, 0, -5, 0], [1, 1, 0, 1])
    assert bo_step(m, pool, MAXIMIZE, y_best=10.0) == 2


def test_bo_step_zero_ei_tie_picks_lowest_index():
    pool = _pool(6, evaluated=(0, 2))
    m = FixedModel(pool, np.full(6, -1.0), np.zeros(6))
    assert bo_step(m, pool, MAXIMIZE, y_best=0.0) == 1


def test_bo_step_matches_exhaustive_oracle():
    rng = np.random.default_rng(2)
    pool = _pool(20, evaluated=(3, 7))
    mu, var = rng.normal(size=20), rng.uniform(0.01, 1, 20)
    yb = 0.5

    def ei_quad(m, v):
        f = lambda y: max(y - yb, 0) * stats.norm.pdf(y, m, np.sqrt(v))  # noqa: E731
        return integrate.quad(f, yb, m + 12 * np.sqrt(v) + 1, epsabs=1e-13)[0]

    cand = pool.unevaluated()
    oracle = cand[np.argmax([ei_quad(mu[i], var[i]) for i in cand])]
    assert bo_step(FixedModel(pool, mu, var), pool, MAXIMIZE, yb) == oracle


def test_bo_step_scale_invariant():
    rng = np.random.default_rng(3)
    pool = _pool(20, evaluated=(0,))
    mu, var = rng.normal(size=20), rng.uniform(0.01, 1, 20)
    base = bo_step(FixedModel(pool, mu, var), pool, MAXIMIZE, 0.2)
    for c in (1e-3, 7.0, 1e4):
        assert bo_step(FixedModel(pool, c * mu, c * c * var), pool, MAXIMIZE, c * 0.2) == base


def test_bo_step_exhausted():
    pool = _pool(3, evaluated=(0, 1, 2))
    with pytest.raises(PoolExhausted):
        bo_step(FixedModel(pool, np.zeros(3), np.ones(3)), pool)


def test_optimum_in_initial_draw_needs_no_extra_evaluations():
    d = random_dataset(small_schema(), 12, seed=1)
    pool = CandidatePool(d)
    traj = bo_run(pool, init_size=11, seed=0, config=FAST)
    # 11 of 12 drawn: the optimum is in the draw unless it is the one left out
    left = np.setdiff1d(np.arange(12), [s.index for s in traj.steps if s.iteration == 0])
    if left[0] != int(np.argmax(d.y)):
        assert traj.n_additional == 0
    else:
        assert traj.n_additional == 1


def test_bo_run_deterministic_and_monotone():
    d = random_dataset(small_schema(), 30, seed=4)
    a = bo_run(CandidatePool(d), 8, seed=3, stop=Budget(4), config=FAST)
    b = bo_run(CandidatePool(d), 8, seed=3, stop=Budget(4), config=FAST)
    assert [s.index for s in a.steps] == [s.index for s in b.steps]
    assert len(a.additional) == 4
    assert np.all(np.diff(a.incumbents()) >= 0)
    idx = [s.index for s in a.steps]
    assert len(set(idx)) == len(idx)


def test_bo_run_minimize_finds_target():
    d = random_dataset(small_schema(), 25, seed=8)
    traj = bo_run(CandidatePool(d), 6, direction=MINIMIZE, seed=1, config=FAST)
    assert traj.found_at is not None
    assert traj.steps[-1].incumbent == d.y.min()
    assert np.all(np.diff(traj.incumbents()) <= 0)


def test_random_search_shares_initial_draw():
    d = random_dataset(small_schema(), 30, seed=4)
    r = random_search_run(CandidatePool(d), 8, seed=3, exclude_target=True)
    b = bo_run(CandidatePool(d), 8, seed=3, stop=Budget(1), config=FAST, exclude_target=True)
    init = lambda t: [s.index for s in t.steps if s.iteration == 0]  # noqa: E731
    assert init(r) == init(b)
    assert r.found_at is not None and r.found_at >= 1
    assert int(np.argmax(d.y)) not in init(r)


def test_bo_run_argument_checks():
    d = random_dataset(small_schema(), 10)
    with pytest.raises(ValueError):
        bo_run(CandidatePool(d), 0)
    with pytest.raises(ValueError):
        bo_run(CandidatePool(d), 10)
    with pytest.raises(ValueError):
        bo_run(CandidatePool(d.subset(np.arange(10)).with_y(d.y)), 3, direction="sideways")


def test_trajectory_csv(tmp_path):
    d = random_dataset(small_schema(), 20, seed=2)
    traj = random_search_run(CandidatePool(d), 5, seed=0, stop=Budget(3))
    p = tmp_path / "t.csv"
    write_trajectory_csv(traj, p, comment="lmgp test")
    lines = p.read_text().splitlines()
    assert lines[0] == "# lmgp test" and lines[1] == "iter,combo,y,incumbent"
    assert len(lines) == 2 + 5 + 3


def test_load_candidate_csv(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("x1,t1,y\n0.1,1,3.0\n0.5,2,1.0\n0.9,1,2.0\n")
    pool = load_candidate_csv(p)
    assert len(pool) == 3 and pool.unevaluated().tolist() == [0, 1, 2]
    p.write_text("x1,t1,y\n0.1,1,3.0\n0.1,1,3.0\n0.9,2,2.0\n")
    assert len(load_candidate_csv(p)) == 3
    p.write_text("x1,t1,y\n0.1,1,3.0\n0.2,2\n")
    with pytest.raises(ParseError, match=":3:"):
        load_candidate_csv(p)
    p.write_text("x1,t1,y\n0.1,1,3.0\n0.2,1.5,1\n")
    with pytest.raises(ParseError, match=":3:"):
        load_candidate_csv(p)


def test_pool_mark_twice():
    pool = _pool(3)
    pool.mark(1)
    with pytest.raises(ValueError):
        pool.mark(1)
    assert pool.fresh().unevaluated().tolist() == [0, 1, 2]


@pytest.mark.slow
def test_lmgp_beats_random_on_borehole_pool_small():
    d = borehole_data(60, seed=11)
    pool = CandidatePool(d)
    bo = [bo_run(pool, 15, seed=s, config=FitConfig(n_starts=3), exclude_target=True).n_additional for s in range(3)]
    rs = [random_search_run(pool, 15, seed=s, exclude_target=True).n_additional for s in range(3)]
    assert np.mean(bo) < np.mean(rs)
