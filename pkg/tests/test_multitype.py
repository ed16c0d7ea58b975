import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coupledde.de_engine import bp_threshold
from coupledde.ensembles import (
    V1,
    CoupledEnsembleSpec,
    EnsembleError,
    SmoothingDistribution,
    TwoTypeSpec,
    build_protograph_chain,
)
from coupledde.multitype import (
    BundleProfile,
    ProtographSystem,
    TwoTypeProfile,
    TwoTypeSystem,
    protograph_step,
    protograph_threshold,
    two_type_step,
    two_type_threshold,
)


def two_type_oracle(xu, xl, eps, dv, au, al):
    L = len(xu)

    def rx(arr, z):
        return arr[z - 1] if 1 <= z <= L else 0.0

    yu, yl = {}, {}
    for z in range(1, L + 2):
        a = 1 - (au * rx(xu, z) + (1 - au) * rx(xu, z - 1))
        b = 1 - (al * rx(xl, z) + (1 - al) * rx(xl, z - 1))
        yu[z] = a ** (dv - 1) * b**dv
        yl[z] = a**dv * b ** (dv - 1)
    nu = [eps * (1 - (au * yu[z] + (1 - au) * yu[z + 1])) ** (dv - 1) for z in range(1, L + 1)]
    nl = [eps * (1 - (al * yl[z] + (1 - al) * yl[z + 1])) ** (dv - 1) for z in range(1, L + 1)]
    return np.array(nu), np.array(nl)


def bundle_oracle(chain, x, eps):
    """Generic multi-edge BEC DE over the chain's explicit bundle list."""
    bundles = list(chain.bundles)

    def col(b):
        return (0 if b.vn_type == V1 else 1) + (0 if b.cn_position == b.vn_position else 2)

    msg = {b: x[b.vn_position - 1, col(b)] for b in bundles}
    back = {}
    for b in bundles:
        p = 1.0
        for o in bundles:
            if o.cn_position == b.cn_position:
                p *= (1 - msg[o]) ** (o.multiplicity - (o == b))
        back[b] = 1 - p
    out = np.zeros_like(x)
    for b in bundles:
        p = eps
        for o in bundles:
            if o.vn_position == b.vn_position and o.vn_type == b.vn_type:
                p *= back[o] ** (o.multiplicity - (o == b))
        out[b.vn_position - 1, col(b)] = p
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_two_type_step_oracle(dv, au, al, eps, seed):
    L = 9
    rng = np.random.default_rng(seed)
    xu, xl = rng.random(L), rng.random(L)
    spec = TwoTypeSpec(dv, au, al, L)
    out = two_type_step(TwoTypeProfile(xu, xl, eps), spec)
    wu, wl = two_type_oracle(xu, xl, eps, dv, au, al)
    assert np.max(np.abs(out.upper - wu)) <= 1e-14
    assert np.max(np.abs(out.lower - wl)) <= 1e-14
    assert np.all((out.upper >= 0) & (out.upper <= eps))


def test_two_type_trivial():
    spec = TwoTypeSpec(4, 0.3, 0.6, 10)
    out = two_type_step(TwoTypeProfile(np.zeros(10), np.zeros(10), 0.7), spec)
    assert not out.upper.any() and not out.lower.any()
    assert np.all(out.y_upper == 1.0) and np.all(out.y_lower == 1.0)
    with pytest.raises(EnsembleError):
        two_type_step(TwoTypeProfile(np.zeros(9), np.zeros(9), 0.7), spec)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.data(), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_protograph_step_oracle(dv, data, eps, seed):
    b1 = data.draw(st.integers(0, dv))
    b2 = data.draw(st.integers(0, dv))
    chain = build_protograph_chain(dv, b1, b2, 6)
    system = ProtographSystem(chain)
    x = np.random.default_rng(seed).random((6, 4))
    system.mask_unused(x)
    got = protograph_step(BundleProfile(x, np.full_like(x, np.nan), eps), chain).vn_to_cn
    assert np.max(np.abs(got - bundle_oracle(chain, x, eps))) <= 1e-14


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 7), st.data(), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_multitype_monotone_and_range(dv, data, eps, seed):
    rng = np.random.default_rng(seed)
    b1 = data.draw(st.integers(0, dv))
    b2 = data.draw(st.integers(0, dv))
    chain = build_protograph_chain(dv, b1, b2, 8)
    lo = rng.random((8, 4))
    hi = np.minimum(1.0, lo + rng.random((8, 4)))
    f = [protograph_step(BundleProfile(s, np.zeros_like(s), eps), chain).vn_to_cn for s in (lo, hi)]
    assert np.all(f[1] >= f[0]) and np.all(f[1] <= eps) and np.all(f[0] >= 0)

    spec = TwoTypeSpec(dv, data.draw(st.floats(0, 1)), data.draw(st.floats(0, 1)), 8)
    g = [two_type_step(TwoTypeProfile(s[:, 0], s[:, 1], eps), spec) for s in (lo, hi)]
    assert np.all(g[1].upper >= g[0].upper) and np.all(g[1].lower >= g[0].lower)
    assert np.all(g[1].upper <= eps) and np.all(g[0].lower >= 0)


def test_protograph_zero_epsilon_and_mismatch():
    chain = build_protograph_chain(5, 1, 1, 12)
    x = np.random.default_rng(0).random((12, 4))
    assert not protograph_step(BundleProfile(x, x, 0.0), chain).vn_to_cn.any()
    with pytest.raises(EnsembleError):
        protograph_step(BundleProfile(x[:5], x[:5], 0.2), chain)


def test_zero_multiplicity_bundles_dropped():
    chain = build_protograph_chain(5, 0, 5, 10)
    state = ProtographSystem(chain).initial_state(0.4)
    assert not state[:, 0].any() and not state[:, 3].any()
    buf = io.StringIO()
    BundleProfile.initial(chain, 0.4).to_csv(buf, chain)
    rows = buf.getvalue().splitlines()
    assert len(rows) == 1 + 2 * 10


@pytest.mark.parametrize("dv", [3, 4, 5, 6, 7])
def test_two_type_equal_alphas_match_single_type(dv):
    L, alpha = 100, 0.4
    two = two_type_threshold(TwoTypeSpec(dv, alpha, alpha, L), tol=2e-5).threshold
    one = bp_threshold(CoupledEnsembleSpec(dv, 2 * dv, SmoothingDistribution.from_alpha(alpha), L), tol=2e-5).threshold
    assert abs(two - one) <= 1e-4


def test_two_type_examples():
    assert abs(two_type_threshold(TwoTypeSpec(5, 0.350, 0.362, 100), tol=1e-4).threshold - 0.4989) <= 1e-3
    assert abs(two_type_threshold(TwoTypeSpec(6, 0.278, 0.375, 100), tol=1e-4).threshold - 0.4998) <= 1e-3


def test_protograph_symmetry_classes():
    L = 100
    base = protograph_threshold(build_protograph_chain(7, 1, 5, L), tol=1e-4).threshold
    for b1, b2 in [(5, 1), (6, 2), (2, 6)]:
        other = protograph_threshold(build_protograph_chain(7, b1, b2, L), tol=1e-4).threshold
        assert abs(other - base) <= 1e-10
    assert abs(base - 0.49257) <= 1e-3


@settings(max_examples=12, deadline=None)
@given(st.integers(2, 6), st.data())
def test_protograph_symmetry_property(dv, data):
    b1 = data.draw(st.integers(0, dv))
    b2 = data.draw(st.integers(0, dv))
    thr = [
        protograph_threshold(build_protograph_chain(dv, a, b, 24), tol=1e-3, max_iters=20_000).threshold
        for a, b in [(b1, b2), (b2, b1), (dv - b1, dv - b2)]
    ]
    assert max(thr) - min(thr) <= 1e-10


@pytest.mark.parametrize("dv", [4, 6])
def test_half_split_segment_matches_uniform_pair(dv):
    proto = protograph_threshold(build_protograph_chain(dv, dv // 2, dv // 2, 100), tol=1e-4).threshold
    rand = bp_threshold(CoupledEnsembleSpec(dv, 2 * dv, SmoothingDistribution.from_alpha(0.5), 100), tol=1e-4).threshold
    assert abs(proto - rand) <= 2e-3


def test_protograph_examples():
    assert abs(protograph_threshold(build_protograph_chain(5, 1, 1, 100), tol=1e-4).threshold - 0.49811) <= 1e-3
