import numpy as np
import pytest

from coupledde.de_engine import SingleTypeSystem, bp_threshold, run_de
from coupledde.dynamics import (
    NoWaveError,
    SpeedEstimate,
    WindowConfig,
    estimate_speed,
    frontier_positions,
    speed_contours,
    wave_snapshot,
    windowed_decode,
    windowed_threshold,
)
from coupledde.ensembles import CoupledEnsembleSpec, EnsembleError, SmoothingDistribution
from oracles import single_frontier_speed

# First validated runs, cross-checked against the frontier tracker below.
FROZEN_SPEED = {"T_D": 133, "v": 10 / 133}
FROZEN_WD_THRESHOLD = 0.315521240234375  # (10,20,[0.2368,0.7632]) window (20, 9), tol 1e-4


def alpha_system(dv, alpha, L=100):
    return SingleTypeSystem(CoupledEnsembleSpec(dv, 2 * dv, SmoothingDistribution.from_alpha(alpha), L))


def alpha_family(alpha):
    return alpha_system(10, alpha)


def test_speed_regression_and_oracle():
    est = estimate_speed(alpha_system(5, 0.359), 0.45)
    assert isinstance(est, SpeedEstimate)
    assert est.T_D == FROZEN_SPEED["T_D"]
    assert abs(est.v - FROZEN_SPEED["v"]) <= 1e-12
    assert est.v == est.D / est.T_D
    oracle = single_frontier_speed(5, 0.359, 0.45)
    assert abs(est.v - oracle) <= 0.05 * oracle


def test_speed_mirrors_under_reversal():
    a = estimate_speed(alpha_system(5, 0.35), 0.48)
    b = estimate_speed(alpha_system(5, 0.65), 0.48)
    assert a.T_D == b.T_D and {a.side, b.side} == {"left", "right"}
    half = estimate_speed(alpha_system(5, 0.5), 0.48)
    assert half.T_D > a.T_D


def test_speed_non_increasing_in_epsilon():
    system = alpha_system(5, 0.359)
    speeds = [estimate_speed(system, e).v for e in (0.40, 0.43, 0.46, 0.48, 0.49)]
    assert all(a >= b for a, b in zip(speeds, speeds[1:]))


def test_speed_small_near_threshold():
    system = alpha_system(5, 0.359)
    thr = bp_threshold(system, tol=1e-4).threshold
    try:
        v = estimate_speed(system, thr - 1e-3).v
    except NoWaveError:
        v = 0.0
    assert v < 0.2 * estimate_speed(system, 0.45).v


@pytest.mark.parametrize("alpha,eps", [(0.359, 0.44), (0.3, 0.47), (0.45, 0.46)])
def test_larger_displacement_agrees(alpha, eps):
    system = alpha_system(5, alpha)
    v10 = estimate_speed(system, eps, D=10).v
    v20 = estimate_speed(system, eps, D=20).v
    assert abs(v10 - v20) <= 0.1 * v20


def test_burn_in_effect_bounded():
    system = alpha_system(5, 0.359)
    base = estimate_speed(system, 0.46)
    for later in (estimate_speed(system, 0.46, burn_in=12), estimate_speed(system, 0.46, delay=50)):
        assert later.burn_in > base.burn_in
        assert abs(later.v - base.v) <= 0.05 * base.v


def test_no_wave_cases():
    system = alpha_system(5, 0.359)
    with pytest.raises(NoWaveError):
        estimate_speed(system, 0.30)  # below the uncoupled threshold: whole chain clears
    with pytest.raises(NoWaveError):
        estimate_speed(alpha_system(5, 0.5), 0.49)  # above threshold: stalls
    with pytest.raises(EnsembleError):
        estimate_speed(alpha_system(5, 0.359, L=40), 0.45)


def test_contours_match_direct_call():
    pts = speed_contours(alpha_family, [0.3], [0.46, 0.2], workers=1)
    direct = estimate_speed(alpha_family(0.3), 0.46)
    assert pts[0].status == "ok" and pts[0].v == direct.v
    assert pts[1].status == "no-wave" and pts[1].v is None


def test_frontier_positions_from_snapshots():
    system = alpha_system(5, 0.35)
    snaps = [wave_snapshot(system, 0.48, t) for t in (0, 200, 400)]
    fronts = frontier_positions(snaps, 0.24)
    assert fronts[0] == 0.0 and fronts[0] < fronts[1] < fronts[2]


def test_window_config_validation():
    with pytest.raises(EnsembleError):
        WindowConfig(0, 3)
    with pytest.raises(EnsembleError):
        windowed_decode(alpha_system(5, 0.4, L=20), 0.3, WindowConfig(21, 3))


def test_windowed_trivial_and_restriction():
    system = alpha_system(5, 0.4, L=40)
    cfg = WindowConfig(6, 3)
    assert windowed_decode(system, 0.0, cfg).converged
    bp = bp_threshold(system, tol=1e-4).threshold
    wd = windowed_threshold(system, cfg, tol=1e-4).threshold
    assert wd <= bp
    for eps in (bp + 2e-4, 0.55, 0.7):
        assert not run_de(system, eps).converged
        assert not windowed_decode(system, eps, cfg).converged


def test_windowed_monotone_in_window_and_iterations():
    system = alpha_system(5, 0.4, L=60)
    thr = {
        (W, I): windowed_threshold(system, WindowConfig(W, I), tol=1e-4).threshold
        for W in (4, 8, 16)
        for I in (2, 5, 12)
    }
    for (W, I), t in thr.items():
        for (W2, I2), t2 in thr.items():
            if W2 >= W and I2 >= I:
                assert t2 >= t


def test_full_window_reproduces_bp_feasibility():
    L = 20
    system = alpha_system(4, 0.4, L=L)
    cfg = WindowConfig(L, 50_000)
    for eps in np.linspace(0.3, 0.6, 13):
        assert windowed_decode(system, float(eps), cfg).converged == run_de(system, float(eps), max_iters=50_000).converged


def test_windowed_regression():
    system = alpha_system(10, 0.2368)
    thr = windowed_threshold(system, WindowConfig(20, 9), tol=1e-4).threshold
    assert abs(thr - FROZEN_WD_THRESHOLD) <= 1e-12
    assert thr <= 0.4936 + 1e-3
