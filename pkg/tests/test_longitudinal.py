"""Car-following acceleration law and the dual-leader rule."""

import numpy as np
import pytest

from nafdrive.errors import ContractError
from nafdrive.longitudinal import (IdmParams, dual_leader_accel,
                                   free_leader_accel, idm_accel)

P = IdmParams()  # s0=5, T=1, a_m=2.0, b=1.5, delta=4, b_max=9


def test_oracle_following_case():
    # v=20, dv=0, gap=30, v0=30: bracket = 25/30, free = (2/3)^4,
    # max = (25/30)^2 = 0.69444, a = 2.0 * (1 - 0.69444)
    p = IdmParams(v0=30.0)
    a = idm_accel(20.0, 0.0, 30.0, p)
    assert a == pytest.approx(2.0 * (1.0 - (25.0 / 30.0) ** 2), abs=1e-12)
    assert a == pytest.approx(0.6111, abs=1e-4)


def test_standstill_huge_gap_full_throttle():
    a = idm_accel(0.0, 0.0, 1e6, P)
    assert a == pytest.approx(2.0, abs=1e-9)


def test_at_desired_speed_no_interaction():
    p = IdmParams(v0=25.0)
    a = idm_accel(25.0, 0.0, 1e6, p)
    assert a == pytest.approx(0.0, abs=1e-6)


def test_hard_braking_clamped():
    p = IdmParams(v0=100.0 / 3.0)
    a = idm_accel(25.0, 5.0, 20.0, p)
    assert a == -9.0


def test_nonpositive_gap_rejected():
    with pytest.raises(ContractError):
        idm_accel(10.0, 0.0, 0.0, P)
    with pytest.raises(ContractError):
        idm_accel(10.0, 0.0, -1.0, P)


def test_output_bounds():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        v = rng.uniform(0, 40)
        dv = rng.uniform(-20, 20)
        gap = rng.uniform(0.1, 200)
        a = idm_accel(v, dv, gap, P)
        assert -P.b_max <= a <= P.a_m


def test_monotone_in_gap_and_closing_speed():
    rng = np.random.default_rng(1)
    for _ in range(2000):
        v = rng.uniform(0, 40)
        dv = rng.uniform(-15, 15)
        gap = rng.uniform(1.0, 150.0)
        base = idm_accel(v, dv, gap, P)
        assert idm_accel(v, dv, gap * 1.5, P) >= base  # larger gap never worse
        assert idm_accel(v, dv + 1.0, gap, P) <= base  # closing faster never better


def test_free_flow_standstill():
    assert free_leader_accel(0.0, P) == pytest.approx(2.0)


def test_free_flow_at_desired_speed():
    p = IdmParams(v0=30.0)
    assert free_leader_accel(30.0, p) == pytest.approx(0.0, abs=1e-12)


def test_free_flow_overspeed():
    p = IdmParams(v0=25.0)
    a = free_leader_accel(1.2 * 25.0, p)
    assert a == pytest.approx(2.0 * (1.0 - 1.2 ** 4), abs=1e-12)
    assert a == pytest.approx(-2.147, abs=1e-3)


def test_idm_never_exceeds_free_flow():
    rng = np.random.default_rng(2)
    for _ in range(2000):
        v = rng.uniform(0, 40)
        a = idm_accel(v, rng.uniform(-15, 15), rng.uniform(1, 150), P)
        assert a <= free_leader_accel(v, P) + 1e-12


def test_dual_identical_leaders():
    leader = (30.0, 20.0)
    assert dual_leader_accel(20.0, P, leader, leader) == \
        idm_accel(20.0, 0.0, 30.0, P)


def test_dual_takes_minimum():
    # construct leaders so the single-leader results differ
    near = (8.0, 10.0)
    far = (80.0, 30.0)
    v = 20.0
    a_near = idm_accel(v, v - near[1], near[0], P)
    a_far = idm_accel(v, v - far[1], far[0], P)
    assert dual_leader_accel(v, P, far, near) == min(a_near, a_far)
    assert dual_leader_accel(v, P, near, far) == min(a_near, a_far)


def test_dual_single_leader_only():
    leader = (25.0, 15.0)
    v = 20.0
    expected = min(idm_accel(v, v - leader[1], leader[0], P),
                   free_leader_accel(v, P))
    assert dual_leader_accel(v, P, leader, None) == expected


def test_dual_no_leaders_is_free_flow():
    assert dual_leader_accel(20.0, P, None, None) == free_leader_accel(20.0, P)


def test_dual_below_each_single():
    rng = np.random.default_rng(3)
    for _ in range(500):
        v = rng.uniform(0, 35)
        l1 = (rng.uniform(1, 100), rng.uniform(0, 35))
        l2 = (rng.uniform(1, 100), rng.uniform(0, 35))
        a = dual_leader_accel(v, P, l1, l2)
        assert a <= idm_accel(v, v - l1[1], l1[0], P) + 1e-12
        assert a <= idm_accel(v, v - l2[1], l2[0], P) + 1e-12
