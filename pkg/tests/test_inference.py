import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats
from scipy.special import betainc

from cmmsb import (ChainConfig, CopulaSpec, DomainError, Hyperparams, InteractionMatrix,
                   NumericalError, Sampler, SubgroupMap, rng_stream, run_chain)
from cmmsb.copula import copula_cdf, sample_pairs
from cmmsb.inference import (NEGATIVE_MASS, collapsed_mmsb_conditional, pi_rectangle_table,
                             resample_beta, uv_interval_prob)
from cmmsb.relmodel import _add, _remove

INDEP = CopulaSpec("independence")


def fixed_gumbel(theta):
    return CopulaSpec("gumbel", theta=theta, fixed=True)


def reassign(smp, cells):
    st_ = smp.state
    for p in range(st_.n_pairs):
        _remove(p, st_.pairs, st_.e, st_.s, st_.r, st_.N, st_.Nk, st_.m1, st_.m0)
    for p, (k, l) in enumerate(cells):
        _add(p, k, l, st_.pairs, st_.e, st_.s, st_.r, st_.N, st_.Nk, st_.m1, st_.m0)


simplex = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=6).filter(
    lambda w: sum(w) > 1e-3).map(lambda w: np.array(w) / sum(w))

SPECS = [INDEP, fixed_gumbel(1.0), fixed_gumbel(2.5), fixed_gumbel(12.0),
         CopulaSpec("gaussian", theta=-0.8, fixed=True),
         CopulaSpec("gaussian", theta=0.6, fixed=True)]


# -- rectangle table ----------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.sampled_from(SPECS), st.data())
def test_rectangle_table_margins(spec, data):
    pi_i = data.draw(simplex)
    pi_j = data.draw(st.lists(st.floats(0.0, 1.0), min_size=pi_i.size, max_size=pi_i.size)
                     .filter(lambda w: sum(w) > 1e-3)).copy()
    pi_j = np.array(pi_j) / sum(pi_j)
    t = pi_rectangle_table(spec, pi_i, pi_j)
    assert (t >= 0).all()
    assert np.allclose(t.sum(axis=1), pi_i, atol=1e-9)
    assert np.allclose(t.sum(axis=0), pi_j, atol=1e-9)
    assert t.sum() == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("spec", [INDEP, fixed_gumbel(1.0)])
def test_rectangle_table_independence_outer_product(spec):
    rng = rng_stream(3)
    for _ in range(20):
        pi_i, pi_j = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
        assert np.abs(pi_rectangle_table(spec, pi_i, pi_j) - np.outer(pi_i, pi_j)).max() < 1e-12


def test_rectangle_table_gumbel_half_split():
    spec = fixed_gumbel(3.5)
    t = pi_rectangle_table(spec, [0.5, 0.5], [0.5, 0.5])
    c = 2 ** -(2 ** (1 / 3.5))
    assert t[0, 0] == pytest.approx(c, abs=1e-14)
    assert t[1, 1] == pytest.approx(c, abs=1e-14)
    assert t[0, 1] == pytest.approx(0.5 - c, abs=1e-14)
    # Monte Carlo: sample (u, v), invert both sticks, count cells
    n = 1000000
    uv = sample_pairs(spec, n, rng_stream(4))
    cells = (uv[:, 0] > 0.5).astype(int) * 2 + (uv[:, 1] > 0.5).astype(int)
    freq = np.bincount(cells, minlength=4) / n
    sigma = np.sqrt(t.ravel() * (1 - t.ravel()) / n)
    assert (np.abs(freq - t.ravel()) <= 3 * sigma).all()


def test_rectangle_table_rejects_bad_vectors():
    with pytest.raises(DomainError):
        pi_rectangle_table(INDEP, [0.5, 0.6], [0.5, 0.5])
    with pytest.raises(DomainError):
        pi_rectangle_table(INDEP, [1.0], [0.5, 0.5])


# -- uv interval probabilities ----------------------------------------------------

def test_uv_interval_prob_single_community():
    alpha, beta, counts, u = 2.0, np.array([0.6, 0.4]), np.array([3.0]), 0.37
    h1, hh1 = alpha * 0.6 + 3.0, alpha * 0.4
    expected = [1 - betainc(h1, hh1, u), betainc(h1, hh1, u)]
    assert np.allclose(uv_interval_prob(u, alpha, beta, counts), expected, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0.1, 10), simplex.filter(lambda b: (b > 1e-3).all()),
       st.integers(0, 2 ** 31))
def test_uv_interval_prob_is_distribution(u, alpha, beta, seed):
    counts = rng_stream(seed).integers(0, 6, size=beta.size)
    p = uv_interval_prob(u, alpha, beta, counts)
    assert (p >= 0).all()
    assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_uv_interval_prob_integrates_to_mean():
    alpha, beta, counts = 1.5, np.array([0.2, 0.5, 0.3]), np.array([2, 0, 5])
    mean = collapsed_mmsb_conditional(alpha, beta, counts)
    assert np.allclose(mean, (alpha * beta + counts) / (alpha + counts.sum()))
    for k in range(3):
        val, _ = integrate.quad(lambda u: uv_interval_prob(u, alpha, beta, counts)[k], 0, 1,
                                epsabs=1e-12, limit=200)
        assert val == pytest.approx(mean[k], abs=1e-8)


def test_uv_interval_prob_matches_dirichlet_simulation():
    alpha, beta, counts, u = 2.0, np.array([0.3, 0.3, 0.4]), np.array([1, 4, 0]), 0.45
    n = 100000
    pis = rng_stream(5).dirichlet(alpha * beta + counts, size=n)
    k = (np.cumsum(pis, axis=1) < u).sum(axis=1)
    freq = np.bincount(k, minlength=3) / n
    p = uv_interval_prob(u, alpha, beta, counts)
    assert (np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n)).all()


def test_uv_independent_pair_reduces_to_mmsb():
    alpha, beta = 1.0, np.array([0.5, 0.3, 0.2])
    ci, cj = np.array([2, 1, 0]), np.array([0, 0, 3])
    for k in range(3):
        pk, _ = integrate.quad(lambda u: uv_interval_prob(u, alpha, beta, ci)[k], 0, 1,
                               epsabs=1e-13, limit=200)
        for l in range(3):
            pl, _ = integrate.quad(lambda v: uv_interval_prob(v, alpha, beta, cj)[l], 0, 1,
                                   epsabs=1e-13, limit=200)
            expected = (alpha * beta[k] + ci[k]) * (alpha * beta[l] + cj[l]) / (
                (alpha + ci.sum()) * (alpha + cj.sum()))
            assert pk * pl == pytest.approx(expected, abs=1e-10)


def test_uv_interval_prob_errors():
    with pytest.raises(Exception):
        uv_interval_prob(0.5, 1.0, [0.5, 0.5], [-1, 0])
    with pytest.raises(DomainError):
        uv_interval_prob(1.5, 1.0, [0.5, 0.5], [0, 0])


# -- single pair conditionals -------------------------------------------------------

def two_node_sampler(variant="pi", copula=INDEP, e=((-1, 1), (-1, -1)), **kw):
    cfg = ChainConfig(variant=variant, K=2, iterations=2, seed=kw.pop("seed", 1),
                      beta_init=[0.5, 0.5], sample_beta=False,
                      copulas=[copula], **kw)
    return Sampler(InteractionMatrix(np.array(e)), SubgroupMap.full(2), cfg)


def test_pair_update_uniform_when_uninformative():
    smp = two_node_sampler()
    smp.state.pi[:2, :2] = 0.5
    n = 10000
    draws = np.empty(n, dtype=np.int64)
    for t in range(n):
        smp.update_pairs()
        draws[t] = smp.state.s[0] * 2 + smp.state.r[0]
    counts = np.bincount(draws, minlength=4)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_pair_conditional_independent_matches_classical_mmsb():
    rng = rng_stream(9)
    vals = (rng.random((6, 6)) < 0.4).astype(np.int8)
    data = InteractionMatrix(vals)
    for variant in ("pi", "uv"):
        cfg = ChainConfig(variant=variant, K=3, iterations=2, seed=2)
        smp = Sampler(data, SubgroupMap.independent(6), cfg)
        smp.sweep()
        st_, hp = smp.state, cfg.hyper
        for p in range(0, st_.n_pairs, 5):
            got = smp.pair_conditional(p)
            i, j = st_.pairs[p]
            k0, l0 = st_.s[p], st_.r[p]
            _remove(p, st_.pairs, st_.e, st_.s, st_.r, st_.N, st_.Nk, st_.m1, st_.m0)
            if variant == "pi":
                prior = np.outer(st_.pi[i, :3], st_.pi[j, :3])
            else:
                prior = np.outer(collapsed_mmsb_conditional(hp.alpha, st_.beta[:3], st_.N[i, :3]),
                                 collapsed_mmsb_conditional(hp.alpha, st_.beta[:3], st_.N[j, :3]))
            q = (st_.m1[:3, :3] + 1.0) / (st_.m1[:3, :3] + st_.m0[:3, :3] + 2.0)
            w = prior * (q if st_.e[p] == 1 else 1 - q)
            _add(p, k0, l0, st_.pairs, st_.e, st_.s, st_.r, st_.N, st_.Nk, st_.m1, st_.m0)
            assert np.abs(got - w / w.sum()).max() < 1e-10


def test_pair_conditional_favours_supported_cell():
    # many ones in cell (1, 0): an e=1 pair moves mass toward that cell
    n = 8
    vals = np.ones((n, n), dtype=np.int8)
    data = InteractionMatrix(vals)
    cfg = ChainConfig(K=2, iterations=2, seed=3, copulas=[fixed_gumbel(2.0)])
    smp = Sampler(data, SubgroupMap.full(n), cfg)
    reassign(smp, [(1, 0)] * smp.state.n_pairs)
    p = 0
    i, j = smp.state.pairs[p]
    prior = pi_rectangle_table(fixed_gumbel(2.0), smp.state.pi[i, :2], smp.state.pi[j, :2])
    post = smp.pair_conditional(p)
    assert post[1, 0] > prior[1, 0]


def test_pair_conditional_leaves_state_unchanged(block_data, full_map):
    cfg = ChainConfig(K=3, iterations=2, seed=4, copulas=[fixed_gumbel(2.0)])
    smp = Sampler(block_data, full_map, cfg)
    before = [a.copy() for a in (smp.state.s, smp.state.N, smp.state.m1, smp.state.m0)]
    smp.pair_conditional(3)
    after = (smp.state.s, smp.state.N, smp.state.m1, smp.state.m0)
    assert all(np.array_equal(a, b) for a, b in zip(before, after))


# -- membership, beta and theta moves against quadrature oracles ---------------------

def test_pi_move_matches_quadrature():
    smp = two_node_sampler(copula=fixed_gumbel(3.0), e=((-1, 1), (0, -1)),
                           hyper=Hyperparams(alpha=2.0))
    assert smp.state.pairs.tolist() == [[0, 1], [1, 0]]
    reassign(smp, [(0, 0), (1, 0)])
    xs = np.empty((60000, 2))
    for t in range(xs.shape[0]):
        smp.update_pi()
        xs[t] = smp.state.pi[:2, 0]
    # 2-D quadrature over (pi_0[0], pi_1[0])
    assert np.abs(xs[1000:].mean(axis=0) - [0.7790926096618704, 0.4160154291668233]).max() < 0.01


@pytest.mark.parametrize("copula", [INDEP, fixed_gumbel(1.0)])
def test_pi_move_always_accepts_without_dependence(copula):
    smp = two_node_sampler(copula=copula, e=((-1, 1), (0, -1)))
    smp.sweep()
    for _ in range(500):
        smp.update_pi()
    acc, tot = smp.accept["pi"]
    assert acc == tot


def test_crf_beta_matches_quadrature():
    N = np.array([[2, 1], [0, 3], [1, 0]])
    b = np.array([0.3, 0.3, 0.4])
    rng = rng_stream(2)
    draws = np.empty((100000, 2))
    for t in range(draws.shape[0]):
        b = resample_beta(N, b, 1.5, 1.0, rng)
        draws[t] = b[:2]
    assert np.abs(draws[1000:].mean(axis=0) - [0.39533296943231433, 0.43395196506550215]).max() < 0.01


def test_crf_beta_edge_cases():
    rng = rng_stream(3)
    b = resample_beta(np.zeros((3, 2), dtype=np.int64), np.array([0.2, 0.3, 0.5]), 1.0, 1.0, rng)
    assert b[2] == pytest.approx(1.0, abs=1e-9)
    f = resample_beta(np.ones((3, 2), dtype=np.int64), np.array([0.5, 0.5]), 1.0, 1.0, rng,
                      hdp=False)
    assert f.sum() == pytest.approx(1.0) and f.shape == (2,)


def test_beta_given_pi_matches_quadrature():
    cfg = ChainConfig(K=2, iterations=2, seed=1, hyper=Hyperparams(alpha=3.0, gamma=1.5))
    smp = Sampler(InteractionMatrix(np.full((4, 4), -1)), SubgroupMap.independent(4), cfg)
    P = np.array([0.7, 0.55, 0.9, 0.2])
    smp.state.pi[:4, 0] = P
    smp.state.pi[:4, 1] = 1 - P
    bs = np.empty(20000)
    for t in range(bs.size):
        smp.update_beta()
        bs[t] = smp.state.beta[0]
    assert abs(bs[500:].mean() - 0.569698755021365) < 0.01


@pytest.mark.parametrize("variant", ["pi", "uv"])
def test_theta_samples_prior_without_pairs(variant):
    spec = CopulaSpec("gumbel", theta=2.0, proposal_scale=1.5)
    cfg = ChainConfig(variant=variant, K=2, iterations=2, seed=6, copulas=[spec], theta_steps=10)
    sub = SubgroupMap(np.zeros((5, 5), dtype=np.int64), D=1)
    smp = Sampler(InteractionMatrix(np.zeros((5, 5))), sub, cfg)
    th = np.empty(40000)
    for t in range(th.size):
        smp.update_theta()
        th[t] = smp.theta[1]
    grid = np.linspace(1.0, 15.0, 200)
    ecdf = np.searchsorted(np.sort(th), grid, side="right") / th.size
    assert np.abs(ecdf - (1 - np.exp(-0.5 * (grid - 1.0)))).max() < 0.01


# -- chains ---------------------------------------------------------------------

def test_chain_config_validation():
    with pytest.raises(DomainError):
        ChainConfig(iterations=1)
    with pytest.raises(DomainError):
        ChainConfig(burn_in_fraction=1.0)
    with pytest.raises(DomainError):
        ChainConfig(variant="vi")
    with pytest.raises(DomainError):
        ChainConfig(K=2, beta_init=[0.5, 0.4])
    with pytest.raises(DomainError):
        Sampler(InteractionMatrix(np.zeros((3, 3))), SubgroupMap.full(3), ChainConfig())
    assert ChainConfig(mode="finiteK").mode == "finite"


@pytest.mark.parametrize("variant", ["pi", "uv"])
def test_chain_is_deterministic(variant, block_data, full_map):
    cfg = ChainConfig(variant=variant, mode="hdp", K=2, iterations=30, seed=11,
                      copulas=[CopulaSpec("gumbel", theta=2.0)])
    a = run_chain(block_data, full_map, cfg)
    b = run_chain(block_data, full_map, cfg)
    for name in ("K", "occupied", "theta", "loglik", "pred_sum"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True)
    assert a.accept == b.accept


def test_two_iterations_give_one_sample(block_data, full_map):
    tr = run_chain(block_data, full_map, ChainConfig(iterations=2, copulas=[fixed_gumbel(2.0)]))
    assert tr.n_samples == 1 and tr.burn_in == 1 and tr.iterations == 2
    off = ~np.eye(block_data.n, dtype=bool)
    assert ((tr.pred_sum[off] > 0) & (tr.pred_sum[off] < 1)).all()
    assert np.isnan(np.diag(tr.pred_sum)).all()


@pytest.mark.parametrize("variant", ["pi", "uv"])
@pytest.mark.parametrize("mode", ["finite", "hdp"])
def test_counts_consistent_after_every_sweep(variant, mode, block_data):
    sub = SubgroupMap.block(block_data.n, range(5), inside=1, outside=2)
    cfg = ChainConfig(variant=variant, mode=mode, K=3, iterations=40, seed=5,
                      copulas=[CopulaSpec("gumbel", theta=2.0),
                               CopulaSpec("gaussian", theta=0.2)])
    smp = Sampler(block_data.without(np.eye(10, k=1, dtype=bool)), sub, cfg)
    smp.run(callback=lambda t, s: s.state.check_consistency())


def test_cross_variant_agreement_without_dependence(block_data, full_map):
    preds = []
    for variant in ("pi", "uv"):
        cfg = ChainConfig(variant=variant, K=2, iterations=4000, seed=8,
                          copulas=[fixed_gumbel(1.0)])
        mask = np.zeros((10, 10), dtype=bool)
        mask[[0, 3, 6, 9], [5, 1, 2, 4]] = True
        tr = run_chain(block_data.without(mask), full_map, cfg)
        preds.append(tr.pred_sum / tr.n_samples)
    off = ~np.eye(10, dtype=bool)
    assert np.abs(preds[0] - preds[1])[off].mean() < 0.05


def test_negative_mass_is_reported(block_data, full_map):
    smp = Sampler(block_data, full_map, ChainConfig(copulas=[fixed_gumbel(2.0)]))
    with pytest.raises(NumericalError):
        smp._raise_status(NEGATIVE_MASS)
