import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from baconshor.decoherence import DecoherenceModel
from baconshor.detectors import DetectorBank, DetectorError
from baconshor.engines import gauge_trace
from baconshor.pauli import GAUGE, SubspaceTag, code_basis, encode, pauli
from baconshor.trajectory import (
    ErrorInjectionPlan,
    GaugeQubitState,
    NumericalError,
    bayesian_update,
    gauge_bloch,
    gauge_bloch_drift,
    gauge_bloch_step,
    inject_errors,
    kraus_update,
    readout_likelihoods,
    sample_readout,
    sme_step,
    subspace_tables,
    subspace_weights,
)

from .conftest import random_density


def dm(psi):
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------- detectors

def test_detector_bank():
    b = DetectorBank.uniform(2.0, 0.5)
    assert np.allclose(b.efficiency, 0.5)
    assert b.gamma_m == pytest.approx(0.5)
    assert np.allclose(b.residual_dephasing, 0.25)
    assert b.is_uniform()
    k = DetectorBank(1.0, 0.5 + 0.5 * 0.4**2, 0.4, 0.0)
    assert np.allclose(k.ideality, 1)
    assert np.all(k.efficiency < k.ideality)
    with pytest.raises(DetectorError):
        DetectorBank(1.0, 0.4, 0, 0)
    with pytest.raises(DetectorError):
        DetectorBank.uniform(1.0, 1.2)


# ---------------------------------------------------------------- Bayesian update

def test_eigenstate_unchanged(rng):
    bank = DetectorBank.uniform()
    rho = dm(encode(0.6, 0.8))  # +1 eigenstate of G3 and G4
    for r in (-3.0, 0.2, 5.0):
        assert np.allclose(bayesian_update(rho, 2, r, bank, 0.01), rho, atol=1e-12)


def test_two_outcome_bayes():
    bank = DetectorBank.uniform()
    dt = 0.05
    g = GAUGE[0].to_matrix()
    plus = dm(encode(1, 0, "x+"))
    minus = dm(encode(1, 0, "x-"))
    psi = (encode(1, 0, "x+") + encode(1, 0, "x-")) / np.sqrt(2)
    rho = dm(psi)
    for r in (-1.3, 0.0, 2.2):
        out = bayesian_update(rho, 0, r, bank, dt)
        pp, pm = readout_likelihoods(r, 1.0, dt)
        assert np.trace(plus @ out).real == pytest.approx(pp / (pp + pm))
        assert np.trace(minus @ out).real == pytest.approx(pm / (pp + pm))
        assert np.trace(g @ out).real == pytest.approx((pp - pm) / (pp + pm))


@pytest.mark.parametrize("bank", [DetectorBank.uniform(), DetectorBank.uniform(1.0, 0.5),
                                  DetectorBank(1.0, 0.5 + 0.5 * 0.3**2, 0.3, 0.2)])
def test_ensemble_average_dephases(bank):
    """Averaging the unnormalized update over the readout density gives Gamma-decay of coherences."""
    dt = 0.2
    psi = (encode(1, 0, "x+") + encode(1, 0, "x-")) / np.sqrt(2)
    rho = dm(psi)
    g = GAUGE[0].to_matrix()
    pp = 0.5 * (np.eye(16) + g)
    pm = 0.5 * (np.eye(16) - g)
    sd = np.sqrt(bank.tau[0] / dt)
    r = np.linspace(-1 - 12 * sd, 1 + 12 * sd, 20001)
    avg = np.zeros((16, 16), complex)
    for ri, w in zip(r, np.gradient(r)):
        lp, lm = readout_likelihoods(ri, bank.tau[0], dt)
        p = 0.5 * (lp + lm)
        avg += w * p * bayesian_update(rho, 0, ri, bank, dt)
    coh_before = np.abs(pp @ rho @ pm).max()
    coh_after = pp @ avg @ pm
    ratio = np.abs(coh_after).max() / coh_before
    assert ratio == pytest.approx(np.exp(-bank.gamma[0] * dt), rel=1e-6)
    assert np.allclose(pp @ avg @ pp, pp @ rho @ pp, atol=1e-8)


def test_kraus_update_linear(rng):
    bank = DetectorBank(1.0, 0.7, 0.2, 0.1)
    a, b = random_density(rng), random_density(rng)
    lhs = kraus_update(0.3 * a + 0.7 * b, 2, 0.4, bank, 0.01)
    rhs = 0.3 * kraus_update(a, 2, 0.4, bank, 0.01) + 0.7 * kraus_update(b, 2, 0.4, bank, 0.01)
    assert np.allclose(lhs, rhs)


def test_vanishing_norm_signalled():
    bank = DetectorBank.uniform()
    with pytest.raises(NumericalError):
        bayesian_update(np.zeros((16, 16)), 0, 0.0, bank, 0.01)


# ---------------------------------------------------------------- readouts

def test_readout_statistics(rng):
    bank = DetectorBank.uniform()
    dt = 0.01
    rho = dm(encode(1, 0, "x+"))  # G1 = +1
    n = 100_000
    r = np.array([sample_readout(rho, 0, bank, dt, rng) for _ in range(n)])
    assert abs(r.mean() - 1) < 3 * np.sqrt(bank.tau[0] / dt / n)
    rho0 = dm(encode(1, 0, "z+"))  # <G1> = 0
    r0 = np.array([sample_readout(rho0, 0, bank, dt, rng) for _ in range(n)])
    var = bank.tau[0] / dt + 1
    assert abs(r0.mean()) < 4 * np.sqrt(var / n)
    assert r0.var() == pytest.approx(var, rel=0.02)
    r_half = np.array([sample_readout(rho, 0, bank, dt / 2, rng) for _ in range(n)])
    assert r_half.var() / r.var() == pytest.approx(2, rel=0.03)


# ---------------------------------------------------------------- sme step

def test_sme_stays_in_code_space_and_pure(rng):
    bank = DetectorBank.uniform()
    rho = dm(encode(0.6, 0.8j))
    for _ in range(300):
        rho, I = sme_step(rho, bank, DecoherenceModel.none(), 0.005, rng)
        assert I.shape == (4,)
    w = subspace_weights(rho)
    assert 1 - w[0] < 1e-10
    assert abs(np.trace(rho @ rho).real - 1) < 1e-8
    assert abs(np.trace(rho).real - 1) < 1e-10
    # the logical state is untouched by gauge measurements
    from baconshor.pauli import decode

    assert np.allclose(decode(rho), [0, 0.96, -0.28], atol=1e-9)


def test_injected_x1_moves_block(rng):
    bank = DetectorBank.uniform()
    rho = dm(encode(0.6, 0.8, "x+"))
    g_before = gauge_bloch(rho)
    plan = ErrorInjectionPlan(scheduled=[(0.0, "X1")])
    out, log = inject_errors(rho, plan, 0.01, rng, t=0.0)
    assert log == ["X1"]
    w = subspace_weights(out)
    assert w[1] == pytest.approx(1)
    assert np.allclose(gauge_bloch(out, SubspaceTag.QX), g_before)


def test_jump_rates(rng):
    dt = 0.5
    model = DecoherenceModel.markovian([[0.1, 0, 0], [0, 0, 0], [0, 0, 0], [0, 0, 0]])
    plan = ErrorInjectionPlan(model, mode="jumps")
    for psi in (encode(1, 0), encode(0.6, 0.8, "x-")):
        n, hits = 4000, 0
        for _ in range(n):
            _, log = inject_errors(dm(psi), plan, dt, rng)
            hits += bool(log)
        p = 0.1 * dt
        assert abs(hits / n - p) < 4 * np.sqrt(p * (1 - p) / n)
    mu = 0.2
    relax = ErrorInjectionPlan(DecoherenceModel.relaxation([mu, 0, 0, 0]), mode="jumps")
    n, hits = 4000, 0
    for _ in range(n):
        _, log = inject_errors(dm(encode(0.6, 0.8)), relax, dt, rng)
        hits += bool(log)
    p = mu / 2 * dt
    assert abs(hits / n - p) < 4 * np.sqrt(p * (1 - p) / n)


def test_no_rates_no_jumps(rng):
    rho = dm(encode(1, 0))
    out, log = inject_errors(rho, ErrorInjectionPlan(DecoherenceModel.none(), mode="jumps"), 0.1, rng)
    assert log == [] and np.allclose(out, rho)


# ---------------------------------------------------------------- reduced model

def test_subspace_signs():
    sign = subspace_tables()["sign"]
    assert sign[SubspaceTag.Q0].tolist() == [1, 1, 1, 1]
    assert sign[SubspaceTag.QX].tolist() == [1, 1, -1, 1]  # I_3 flips
    assert sign[SubspaceTag.QZ].tolist() == [-1, 1, 1, 1]  # I_1 flips
    assert sign[SubspaceTag.QY].tolist() == [-1, 1, -1, 1]


@pytest.mark.parametrize("bank", [DetectorBank.uniform(), DetectorBank(1.0, 0.5 + 0.5 * 0.3**2, 0.3, 0.4),
                                  DetectorBank([1.0, 0.8, 1.2, 0.9], 0.9, 0.0, [0.1, -0.2, 0.0, 0.3])])
@pytest.mark.parametrize("sub", ["I", "X1", "Y1", "Z1"])
def test_reduced_matches_dense(bank, sub, rng):
    dt = 0.004
    psi = encode(0.6, 0.8, "x+")
    rho = dm(psi)
    gq = GaugeQubitState(gauge_bloch(rho))
    if sub != "I":
        m = pauli(sub).to_matrix()
        rho = m @ rho @ m.conj().T
        gq.apply_error(sub)
    tag = gq.subspace
    worst = 0.0
    for _ in range(300):
        rho, I = sme_step(rho, bank, DecoherenceModel.none(), dt, rng)
        gq, _ = gauge_bloch_step(gq, bank, dt, readouts=I)
        worst = max(worst, np.abs(gauge_bloch(rho, tag) - gq.bloch).max())
    assert worst < 1e-9


def test_reduced_norm_preserved(rng):
    bank = DetectorBank.uniform()
    gq = GaugeQubitState([0.6, 0.0, 0.8])
    for _ in range(10_000):
        gq, _ = gauge_bloch_step(gq, bank, 0.01, rng)
    assert abs(np.linalg.norm(gq.bloch) - 1) < 1e-6


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_drift_exchange_symmetry(x, y, z):
    bank = DetectorBank.uniform()
    d, B = gauge_bloch_drift(np.array([x, y, z]), bank)
    d2, B2 = gauge_bloch_drift(np.array([z, y, x]), bank)
    assert np.allclose(d2, d[[2, 1, 0]])
    assert np.allclose(B2[:, [2, 3, 0, 1]][[2, 1, 0]], B)


def test_ensemble_decay_rates():
    bank = DetectorBank.uniform()
    gm = bank.gamma_m
    dt, n_steps, n = 0.005, 100, 20_000
    t = dt * (np.arange(n_steps) + 1)
    rates = {}
    for axis, start in ((0, (1.0, 0, 0)), (1, (0, 1.0, 0)), (2, (0, 0, 1.0))):
        mean = np.zeros(n_steps)
        for i in range(n):
            tr = gauge_trace(np.random.default_rng([axis, i]), n_steps, dt, bank, DecoherenceModel.none(),
                             bloch0=start)
            mean += tr["bloch"][:, axis]
        mean /= n
        rates[axis] = -np.polyfit(t, np.log(mean), 1)[0]
    assert rates[0] == pytest.approx(2 * gm, rel=0.03)
    assert rates[2] == pytest.approx(2 * gm, rel=0.03)
    assert rates[1] == pytest.approx(4 * gm, rel=0.03)


def test_gauge_state_validation():
    with pytest.raises(ValueError):
        GaugeQubitState([1.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        gauge_bloch_step(GaugeQubitState(), DetectorBank.uniform(), 0.01)
