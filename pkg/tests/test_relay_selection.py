import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from v2xrelay.capacity import capacity_bits, rank_relays
from v2xrelay.channel_model import DestinationNode, RelayNode, SourceSignal
from v2xrelay.errors import InfeasibleBudget, InsufficientRelays
from v2xrelay.relay_selection import (
    AllocationConfig,
    PoolArrays,
    RelaySelection,
    Scheme,
    allocate_power,
    feasible_start,
    select_optimized,
    select_topk,
    select_uniform,
    selection_capacity,
    verify_capacity_chain,
)
from v2xrelay.simulation import NoisePattern, PopulationSpec, generate_population

FIG5 = dict(
    h_src_toward_src=(0.5, 0.9), h_dst_toward_src=(0.0, 0.7),
    h_src_toward_dst=(0.5, 0.9), h_dst_toward_dst=(0.0, 0.7),
    d=0.004, relay_power=(10.0, 25.0), noise=NoisePattern("mod3", 1.0, 0.0),
)
SRC5, DEST5 = SourceSignal.scalar(2.0, 18.0), DestinationNode(2.0)


def fig5_pool(seed, n=100):
    return generate_population(PopulationSpec(n_total=n, seed=seed, **FIG5))


def cap(pool, sel, src=SRC5, dest=DEST5):
    return selection_capacity(src, pool, dest, sel).kbps


# ---------------------------------------------------------------- RelaySelection

def test_selection_budget_invariant():
    with pytest.raises(ValueError):
        RelaySelection((1, 2), (10.0, 10.0), 30.0, Scheme.UNIFORM_RANKED)
    with pytest.raises(ValueError):
        RelaySelection((1, 1), (15.0, 15.0), 30.0, Scheme.UNIFORM_RANKED)


# ---------------------------------------------------------------- B-1

def test_uniform_whole_pool():
    pool = fig5_pool(0, n=5)
    sel = select_uniform(pool, 5, 50.0, rng_seed=1)
    assert sorted(sel.relay_ids) == [1, 2, 3, 4, 5]
    assert sel.powers == (10.0,) * 5


def test_uniform_power_split():
    sel = select_uniform(fig5_pool(0), 2, 30.0, rng_seed=7)
    assert sel.powers == (15.0, 15.0)
    assert sel.scheme is Scheme.UNIFORM_ARBITRARY


def test_uniform_deterministic():
    pool = fig5_pool(3)
    assert select_uniform(pool, 8, 140.0, 42) == select_uniform(pool, 8, 140.0, 42)
    assert select_uniform(pool, 8, 140.0, 42) != select_uniform(pool, 8, 140.0, 43)


def test_uniform_errors():
    pool = fig5_pool(0, n=4)
    with pytest.raises(InsufficientRelays):
        select_uniform(pool, 5, 10.0, 0)
    heavy = [replace(r, min_power=r.power) for r in pool]
    with pytest.raises(InfeasibleBudget):
        select_uniform(heavy, 2, 2.0, 0)


def test_uniform_redraws_infeasible_subsets():
    pool = [RelayNode(i, 0.5, 0.5, 20.0, 1.0, min_power=15.0 if i <= 5 else 0.0) for i in range(1, 11)]
    sel = select_uniform(pool, 2, 20.0, 0)
    assert all(i > 5 for i in sel.relay_ids)


# ---------------------------------------------------------------- B-2

def test_topk_definitional():
    src, dest = SourceSignal.scalar(1.0, 1000.0), DestinationNode(1.0)
    # noiseless relays: capacity set through h_src
    pool = []
    for rid, c in [(1, 2.0), (2, 3.0), (3, 1.0)]:
        snr = 2 ** (2 * c) - 1
        pool.append(RelayNode(rid, math.sqrt(snr / 1000.0), 1.0, 1.0, 0.0))
    assert select_topk(src, pool, dest, 2, 10.0).relay_ids == (2, 1)
    one = select_topk(src, pool, dest, 1, 10.0)
    assert one.relay_ids == (2,) and one.powers == (10.0,)


@pytest.mark.parametrize("seed", range(3))
def test_topk_matches_sort_oracle(seed):
    pool = fig5_pool(seed)
    sel = select_topk(SRC5, pool, DEST5, 12, 12 * 17.5)
    keys = [float(oracles.combined_snr(18, 2, [(r.h_src, r.h_dst, r.power, r.noise_var)], 2)) for r in pool]
    assert list(sel.relay_ids) == oracles.naive_topk(keys, [r.id for r in pool], 12)


def test_topk_infeasible_share():
    pool = [RelayNode(i, 0.5, 0.5, 20.0, 1.0, min_power=12.0) for i in range(1, 4)]
    with pytest.raises(InfeasibleBudget):
        select_topk(SRC5, pool, DEST5, 3, 30.0)


# ---------------------------------------------------------------- B-3

def test_feasible_start():
    np.testing.assert_allclose(feasible_start(np.zeros(3), 30.0), [10, 10, 10])
    np.testing.assert_allclose(feasible_start(np.array([12.0, 0.0, 0.0]), 30.0), [12, 9, 9])
    np.testing.assert_allclose(feasible_start(np.array([12.0, 11.0, 0.0]), 30.0), [12, 11, 7])
    with pytest.raises(InfeasibleBudget):
        feasible_start(np.array([20.0, 11.0]), 30.0)


def test_allocate_single_relay():
    pool = fig5_pool(1)
    sel = select_optimized(SRC5, pool, DEST5, 1, 17.5)
    assert sel.powers == (17.5,)
    assert sel.relay_ids == select_topk(SRC5, pool, DEST5, 1, 17.5).relay_ids


def test_allocate_symmetric_pair():
    pool = [RelayNode(1, 0.8, 0.6, 20.0, 1.0, min_power=5.0), RelayNode(2, 0.8, 0.6, 20.0, 1.0, min_power=5.0)]
    src, dest = SourceSignal.scalar(2.0, 18.0), DestinationNode(2.0)
    uni = select_topk(src, pool, dest, 2, 30.0)
    opt = allocate_power(src, pool, uni, dest)
    assert cap(pool, opt, src, dest) == pytest.approx(cap(pool, uni, src, dest), abs=1e-12)
    assert math.fsum(opt.powers) == pytest.approx(30.0, rel=1e-12)


def test_allocate_infeasible():
    pool = [RelayNode(1, 0.8, 0.6, 20.0, 1.0, min_power=20.0), RelayNode(2, 0.8, 0.6, 20.0, 1.0, min_power=15.0)]
    sel = RelaySelection((1, 2), (15.0, 15.0), 30.0, Scheme.UNIFORM_RANKED)
    with pytest.raises(InfeasibleBudget):
        allocate_power(SRC5, pool, sel, DEST5)


def test_allocate_respects_minimums():
    pool = [replace(r, min_power=min(r.power, 8.0)) for r in fig5_pool(2, n=20)]
    sel = select_optimized(SRC5, pool, DEST5, 6, 60.0)
    mins = {r.id: r.min_power for r in pool}
    assert all(p >= mins[i] - 1e-9 for i, p in zip(sel.relay_ids, sel.powers))
    assert math.fsum(sel.powers) == pytest.approx(60.0, rel=1e-9)


def test_allocate_from_raised_start():
    # equal share (10 W) is below one relay's minimum, so B-2 is infeasible but B-3 is not
    pool = [RelayNode(1, 0.9, 0.7, 25.0, 0.0, min_power=12.0)] + [
        RelayNode(i, 0.6, 0.4, 20.0, 1.0) for i in range(2, 4)
    ]
    with pytest.raises(InfeasibleBudget):
        select_topk(SRC5, pool, DEST5, 3, 30.0)
    sel = select_optimized(SRC5, pool, DEST5, 3, 30.0)
    assert dict(zip(sel.relay_ids, sel.powers))[1] >= 12.0 - 1e-9


def _grid_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 11))
    L = int(rng.integers(1, 4))
    pool = fig5_pool(seed, n=n)
    Q = 17.5 * L
    q = Q / 600
    if seed % 2:
        pool = [replace(r, min_power=min(r.power, float(rng.integers(0, 150)) * q)) for r in pool]
        pool = [replace(r, min_power=math.floor(r.min_power / q) * q) for r in pool]
    return pool, L, Q, q


@pytest.mark.parametrize("seed", range(20))
def test_allocation_matches_grid_oracle(seed):
    pool, L, Q, q = _grid_instance(seed)
    sel = select_optimized(SRC5, pool, DEST5, L, Q, AllocationConfig(quantum=q))
    pa = PoolArrays.from_pool(pool)
    rows = pa.rows(sel.relay_ids)
    snr, _ = oracles.grid_search_allocation(
        18, 2, [(pa.h_src[r], pa.h_dst[r], pa.noise[r]) for r in rows], 2, Q, q, pa.min_power[rows]
    )
    assert cap(pool, sel) == pytest.approx(capacity_bits(snr), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 16))
def test_optimized_dominates_uniform(seed, L):
    pool = fig5_pool(seed, n=30)
    b2 = select_topk(SRC5, pool, DEST5, L, 17.5 * L)
    b3 = select_optimized(SRC5, pool, DEST5, L, 17.5 * L)
    assert cap(pool, b3) >= cap(pool, b2) - 1e-12
    assert b3.relay_ids == b2.relay_ids
    assert math.fsum(b3.powers) == pytest.approx(17.5 * L, rel=1e-9)
    assert min(b3.powers) >= 0


def test_optimized_deterministic():
    pool = fig5_pool(9)
    assert select_optimized(SRC5, pool, DEST5, 8, 140.0) == select_optimized(SRC5, pool, DEST5, 8, 140.0)


def test_max_iters_bounds_work():
    pool = fig5_pool(4)
    sel = select_optimized(SRC5, pool, DEST5, 8, 140.0, AllocationConfig(max_iters=3))
    assert sel.iterations <= 3


def test_topk_beats_mean_of_arbitrary_draws():
    pool = fig5_pool(11)
    ranked = rank_relays(SRC5, pool, DEST5)
    for L in (2, 5, 10):
        b2 = cap(pool, select_topk(SRC5, pool, DEST5, L, 17.5 * L, ranked=ranked))
        rng = np.random.default_rng(L)
        b1 = [cap(pool, select_uniform(pool, L, 17.5 * L, rng)) for _ in range(1000)]
        assert b2 >= np.mean(b1)


# ---------------------------------------------------------------- chain

def test_chain_symmetric_pool():
    pool = [RelayNode(i, 0.8, 0.6, 20.0, 1.0) for i in range(1, 9)]
    rep = verify_capacity_chain(SRC5, pool, DEST5, 4, 70.0, trials=20, seed=0)
    assert rep.c_b3 == pytest.approx(rep.c_b2, abs=1e-12)
    assert rep.c_b2 == pytest.approx(rep.c_b1_mean, abs=1e-12)
    assert rep.chain_holds


def test_chain_fig5_L8():
    rep = verify_capacity_chain(SRC5, fig5_pool(5), DEST5, 8, 140.0, trials=200, seed=5)
    assert rep.chain_holds
    assert rep.c_b3 >= rep.c_b2 >= rep.c_b1_mean
