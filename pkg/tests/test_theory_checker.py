"""Bound arithmetic, variance estimation, and the bound-check report."""

import math

import numpy as np
import pytest

from slowmo_sim import (
    BaseOptimizerConfig,
    BoundInputs,
    ConfigError,
    NoiseModel,
    QuadraticProblem,
    build_logistic,
    check_bound,
    estimate_V,
    gamma_eff,
    local_sgd_bias_surrogate,
    plain_sgd_V,
    prescribed_gamma,
    step_count_condition,
    theorem1_rhs,
    theorem1_terms,
)
from slowmo_sim.theory_checker import lhs_from_records, measured_bias_term


def _inputs(**kw):
    base = dict(delta=1.0, m=1, tau=1, T=100, L=1.0, V=1.0,
                alpha=1.0, beta=0.0, bias_term=0.0,
                gamma_eff=math.sqrt(1.0 / 100))
    base.update(kw)
    return BoundInputs(**base)


# --------------------------------------------------------------------------- #
# closed-form arithmetic
# --------------------------------------------------------------------------- #

def test_rhs_oracle_single_worker_tau_one():
    # (2*1 + 1*1*1)/sqrt(100) = 0.3 with every other term vanishing
    inputs = _inputs()
    terms = theorem1_terms(inputs)
    assert terms["leading"] == pytest.approx(0.3, abs=1e-15)
    assert terms["bias"] == 0.0
    assert terms["alpha_mismatch"] == 0.0
    assert terms["momentum"] == 0.0
    assert theorem1_rhs(inputs) == pytest.approx(0.3, abs=1e-15)


def test_rhs_terms_general_values():
    inputs = _inputs(delta=2.0, m=4, tau=8, T=50, L=1.5, V=0.25,
                     alpha=0.8, beta=0.5, bias_term=0.07,
                     gamma_eff=math.sqrt(4 / (8 * 50)))
    terms = theorem1_terms(inputs)
    k = 8 * 50
    assert terms["leading"] == pytest.approx(
        (2 * 2.0 + 4 * 0.25 * 1.5) / math.sqrt(4 * k), rel=1e-12)
    assert terms["bias"] == pytest.approx(0.07, abs=1e-15)
    mism = (1 - 0.5) / 0.8 - 1.0
    assert terms["alpha_mismatch"] == pytest.approx(
        4 * 4 * 0.25 * 1.5 ** 2 * (8 - 1) / k * mism ** 2, rel=1e-12)
    assert terms["momentum"] == pytest.approx(
        8 * 4 * 0.25 * 1.5 ** 2 * 8 / k * 0.5 ** 2 / (1 - 0.5 ** 2), rel=1e-12)
    assert theorem1_rhs(inputs) == pytest.approx(sum(terms.values()), rel=1e-12)


def test_step_count_condition_oracles():
    # beta=0, alpha=1: the max is the constant branch
    assert step_count_condition(m=2, L=1.0, tau=4, alpha=1.0, beta=0.0) == \
        pytest.approx(2 * (1 + math.sqrt(3.0)), rel=1e-12)
    # momentum branch: 4*tau*beta/(1-beta) = 40 at tau=10, beta=0.5
    got = step_count_condition(m=16, L=1.0, tau=10, alpha=1.0, beta=0.5)
    assert got == pytest.approx(16 * (1 + math.sqrt(3.0) * 40), rel=1e-12)
    assert got == pytest.approx(1124.5125, abs=5e-4)


def test_prescription_identity():
    for m, tau, T, alpha, beta in [(1, 1, 100, 1.0, 0.0), (4, 12, 300, 0.7, 0.6)]:
        g = prescribed_gamma(m, tau, T, alpha, beta)
        assert gamma_eff(alpha, g, beta) == pytest.approx(
            math.sqrt(m / (tau * T)), rel=1e-14)


def test_local_sgd_bias_surrogate_value_and_guard():
    got = local_sgd_bias_surrogate(gamma=0.01, L=2.0, sigma2=1.0, zeta2=0.5, tau=5)
    expect = 3 * 0.01 ** 2 * 4 * 1.0 * 5 + 9 * 0.01 ** 2 * 4 * 0.5 * 25
    assert got == pytest.approx(expect, rel=1e-12)
    with pytest.raises(ConfigError):
        # gamma * L * tau = 1 > 1/6: outside the surrogate's validity range
        local_sgd_bias_surrogate(gamma=0.1, L=2.0, sigma2=1.0, zeta2=0.0, tau=5)


def test_plain_sgd_variance_rule():
    assert plain_sgd_V(sigma2=2.0, m=8) == 0.25


def test_bound_inputs_validation():
    with pytest.raises(ConfigError):
        _inputs(beta=1.0)
    with pytest.raises(ConfigError):
        _inputs(alpha=0.0)
    with pytest.raises(ConfigError):
        _inputs(V=-0.1)


# --------------------------------------------------------------------------- #
# variance estimation
# --------------------------------------------------------------------------- #

def test_estimate_v_matches_additive_theory():
    prob = QuadraticProblem(np.eye(3), [np.zeros(3)] * 4,
                            NoiseModel("additive-gaussian", sigma2=1.0))
    est = estimate_V(prob, BaseOptimizerConfig(kind="plain-sgd"), samples=40_000)
    assert abs(est.value - 0.25) < 4 * est.std_error
    assert est.samples == 40_000 and est.std_error > 0


def test_estimate_v_general_path_runs():
    prob = build_logistic(m=2, dimension=3, samples_per_worker=10,
                          noise=NoiseModel("minibatch", batch_size=3), seed=1)
    est = estimate_V(prob, BaseOptimizerConfig(kind="sgd-nesterov"), samples=400)
    assert est.value > 0 and est.std_error > 0


def test_estimate_v_fast_and_general_paths_agree():
    prob = QuadraticProblem(np.eye(2), [np.zeros(2)] * 2,
                            NoiseModel("additive-gaussian", sigma2=0.5))
    fast = estimate_V(prob, BaseOptimizerConfig(kind="plain-sgd"), samples=20_000)
    slow = estimate_V(prob, BaseOptimizerConfig(kind="sgd-nesterov", beta_local=0.0),
                      samples=20_000)
    # beta_local=0 nesterov directions equal plain-sgd directions in law
    joint_se = math.hypot(fast.std_error, slow.std_error)
    assert abs(fast.value - slow.value) < 4 * joint_se


def test_estimate_v_input_guards():
    prob = QuadraticProblem(np.eye(2), [np.zeros(2)],
                            NoiseModel("additive-gaussian", sigma2=1.0))
    with pytest.raises(ConfigError):
        estimate_V(prob, BaseOptimizerConfig(), samples=99)
    with pytest.raises(ConfigError):
        estimate_V(prob, BaseOptimizerConfig(), protocol="carrier-pigeon")


# --------------------------------------------------------------------------- #
# measured quantities and the report
# --------------------------------------------------------------------------- #

def _fake_records(grad_norm_sq, n, bias=None):
    return [{"grad_norm_sq": grad_norm_sq, "bias_sq": bias} for _ in range(n)]


def test_lhs_needs_full_cadence():
    with pytest.raises(ConfigError):
        lhs_from_records(_fake_records(1.0, 7), tau=2, T=4)
    assert lhs_from_records(_fake_records(0.5, 8), tau=2, T=4) == 0.5


def test_measured_bias_requires_logged_values():
    with pytest.raises(ConfigError):
        measured_bias_term([_fake_records(1.0, 3)])
    assert measured_bias_term([_fake_records(1.0, 3, bias=0.2)]) == \
        pytest.approx(0.2)


def test_check_bound_withholds_verdict_without_premises():
    inputs = _inputs()
    traces = [_fake_records(0.01, 100) for _ in range(3)]  # too few seeds
    report = check_bound(traces, inputs)
    assert report["condition_met"] is False
    assert report["holds"] is None
    assert any("seeds" in r for r in report["reasons"])


def test_check_bound_flags_wrong_prescription():
    inputs = _inputs(gamma_eff=0.5)  # should be 0.1
    traces = [_fake_records(0.01, 100) for _ in range(20)]
    report = check_bound(traces, inputs)
    assert any("prescribed" in r for r in report["reasons"])
    assert report["holds"] is None


def test_check_bound_flags_step_count_violation():
    # L huge makes the required step count enormous
    inputs = _inputs(L=100.0, gamma_eff=math.sqrt(1 / 100))
    traces = [_fake_records(0.01, 100) for _ in range(20)]
    report = check_bound(traces, inputs)
    assert any("step-count" in r for r in report["reasons"])


def test_check_bound_happy_path():
    inputs = _inputs()
    traces = [_fake_records(0.01 + 0.001 * s, 100) for s in range(20)]
    report = check_bound(traces, inputs)
    assert report["condition_met"] is True
    assert report["holds"] is True
    assert report["seeds"] == 20
    assert report["lhs"] == pytest.approx(np.mean([0.01 + 0.001 * s for s in range(20)]))
    assert report["rhs"] == pytest.approx(0.3)
    assert report["lhs_std_error"] > 0
