"""Tests for energy functionals, identity audits and decay fitting."""

import math

import numpy as np
import pytest

from bck_sim.energy import (
    barrier_audit,
    decay_fit,
    energies,
    energy_series,
    estimate_audit_linear,
    factorization_residual,
    forcing_series,
    fourth_derivative_series,
    heat_identity_audit,
    heat_identity_instantiations,
    linear_energy,
    w_field,
)
from bck_sim.errors import DivisionGuardError, FitError
from bck_sim.model import EvolutionState, ModelParams
from bck_sim.spectral import DomainSpec, SpectralField

WEIGHT = math.pi / 2.0  # squared L2 norm of sin(kx) on (0, pi)


def _domain(n=8):
    return DomainSpec(1, (math.pi,), n)


def _state(domain, u=None, ut=None, utt=None, t=0.0):
    zero = SpectralField.zeros(domain)
    return EvolutionState(t, u or zero, ut or zero, utt or zero)


class _Traj:
    """Minimal trajectory stand-in for audit tests."""

    def __init__(self, domain, t_grid, u, ut, utt, uttt):
        self.domain = domain
        self.t_grid = np.asarray(t_grid, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.ut = np.asarray(ut, dtype=float)
        self.utt = np.asarray(utt, dtype=float)
        self.uttt = np.asarray(uttt, dtype=float)


def _constant_traj(domain, coeffs, t_grid):
    nt = len(t_grid)
    u = np.tile(coeffs, (nt, 1))
    zeros = np.zeros_like(u)
    return _Traj(domain, t_grid, u, zeros, zeros, zeros)


# ---------------------------------------------------------------------------
# pointwise functionals
# ---------------------------------------------------------------------------


def test_energies_zero_state():
    dom = _domain()
    zero = SpectralField.zeros(dom)
    report = energies(_state(dom), zero, ModelParams(1, 1, 1, 0.2, 1), utttt=zero)
    assert report.E1 == 0.0 and report.E2 == 0.0 and report.E_total == 0.0
    assert report.k_functional == 0.0
    assert report.linear_energy == 0.0
    assert report.linf_ut == 0.0


def test_w_field_single_mode():
    # a=1, u = sin x, lambda=1: w = A u = sin x, w_t = 0 and, in the linear
    # model, u_ttt = -sin x so w_tt = -sin x
    dom = _domain()
    params = ModelParams(1, 1, 1, 0.0, 0)
    state = _state(dom, u=SpectralField.single_mode(dom, 1, 1.0))
    w, wt, wtt = w_field(state, params)
    expected = np.zeros(8)
    expected[0] = 1.0
    np.testing.assert_allclose(w.coeffs, expected, rtol=0, atol=1e-12)
    np.testing.assert_allclose(wt.coeffs, 0.0, rtol=0, atol=1e-12)
    np.testing.assert_allclose(wtt.coeffs, -expected, rtol=0, atol=1e-12)


def test_energies_single_mode_closed_form():
    # u = sin x alone with u_t = u_tt = u_ttt = 0 and a = 1:
    # E1 = E2 = pi/4, E_total = pi/2
    dom = _domain()
    params = ModelParams(1, 1, 1, 0.0, 0)
    state = _state(dom, u=SpectralField.single_mode(dom, 1, 1.0))
    report = energies(state, SpectralField.zeros(dom), params)
    assert abs(report.E1 - math.pi / 4.0) < 1e-12
    assert abs(report.E2 - math.pi / 4.0) < 1e-12
    assert report.E_total == report.E1 + report.E2
    assert report.k_functional is None
    # linear energy: |u|_{H4}^2 + |u_tt + b A u_t + c^2 A u|_{H2}^2 = pi
    assert abs(report.linear_energy - math.pi) < 1e-12


def test_energies_quadratic_scaling():
    rng = np.random.default_rng(41)
    dom = _domain()
    params = ModelParams(0.8, 1.2, 0.9, 0.0, 0)
    fields = [SpectralField(dom, rng.standard_normal(8)) for _ in range(5)]
    state = _state(dom, u=fields[0], ut=fields[1], utt=fields[2])
    alpha = 3.0
    scaled_state = _state(
        dom, u=alpha * fields[0], ut=alpha * fields[1], utt=alpha * fields[2]
    )
    base = energies(state, fields[3], params, utttt=fields[4])
    scaled = energies(scaled_state, alpha * fields[3], params, utttt=alpha * fields[4])
    for attr in ("E1", "E2", "E_total", "k_functional", "linear_energy"):
        np.testing.assert_allclose(
            getattr(scaled, attr), alpha**2 * getattr(base, attr), rtol=1e-12
        )
    for key in base.sobolev:
        np.testing.assert_allclose(scaled.sobolev[key], alpha * base.sobolev[key], rtol=1e-12)
    np.testing.assert_allclose(scaled.linf_ut, alpha * base.linf_ut, rtol=1e-12)


def test_e2_dominated_by_k_functional():
    # modal Poincare: E2 <= k/lambda0, with ratio exactly 1/(2 lambda0) for
    # a pure lowest-mode displacement
    dom = _domain()
    params = ModelParams(1, 1, 1, 0.0, 0)
    state = _state(dom, u=SpectralField.single_mode(dom, 1, 0.7))
    zero = SpectralField.zeros(dom)
    report = energies(state, zero, params, utttt=zero)
    lam0 = dom.lambda0
    assert abs(report.E2 - 0.5 / lam0 * report.k_functional) < 1e-12

    rng = np.random.default_rng(42)
    fields = [SpectralField(dom, rng.standard_normal(8)) for _ in range(5)]
    report = energies(
        _state(dom, u=fields[0], ut=fields[1], utt=fields[2]),
        fields[3],
        params,
        utttt=fields[4],
    )
    assert report.E2 <= report.k_functional / lam0 * (1.0 + 1e-12)


def test_fourth_derivative_series_quadratic_exact():
    dom = _domain(4)
    t = np.linspace(0.0, 1.0, 11)
    coeffs = np.zeros((11, 4))
    coeffs[:, 0] = 3.0 * t**2
    deriv = fourth_derivative_series(t, coeffs)
    np.testing.assert_allclose(deriv[1:-1, 0], 6.0 * t[1:-1], rtol=0, atol=1e-12)
    assert abs(deriv[0, 0] - (coeffs[1, 0] - coeffs[0, 0]) / 0.1) < 1e-12


# ---------------------------------------------------------------------------
# heat identity
# ---------------------------------------------------------------------------


def test_heat_identity_zero_field():
    dom = _domain(4)
    t = np.linspace(0.0, 1.0, 101)
    v = np.zeros((101, 4))
    assert heat_identity_audit(t, v, 0.5, dom) == 0.0


def test_heat_identity_exact_heat_solution():
    # v(t) = exp(-a*lambda*t) sin(x) solves the heat flow, making both
    # sides vanish identically; only quadrature error remains
    dom = _domain(4)
    a = 0.5
    lam = 1.0
    t = np.arange(0.0, 1.0 + 1e-12, 1e-3)
    amp = 0.1 * np.exp(-a * lam * t)
    v = np.zeros((t.size, 4))
    v[:, 0] = amp
    vt = np.zeros_like(v)
    vt[:, 0] = -a * lam * amp
    assert heat_identity_audit(t, v, a, dom, vt) < 1e-6
    assert heat_identity_audit(t, v, a, dom) < 1e-6


def test_heat_identity_generic_field_refines():
    # the identity is algebraic: any smooth series satisfies it up to
    # quadrature error.  With an exact v_t the trapezoid error drops at
    # second order under dt-halving.
    dom = _domain(4)
    rng = np.random.default_rng(43)
    base = rng.standard_normal(4)
    osc = rng.standard_normal(4)

    def sample(dt):
        t = np.arange(0.0, 1.0 + 1e-12, dt)
        envelope = np.exp(-0.6 * t)[:, None]
        wave = np.cos(2.3 * t)[:, None]
        dwave = -2.3 * np.sin(2.3 * t)[:, None]
        v = envelope * (base[None, :] + 0.5 * wave * osc[None, :])
        vt = -0.6 * v + envelope * 0.5 * dwave * osc[None, :]
        return t, v, vt

    t1, v1, vt1 = sample(2e-3)
    t2, v2, vt2 = sample(1e-3)
    r1 = heat_identity_audit(t1, v1, 0.8, dom, vt1)
    r2 = heat_identity_audit(t2, v2, 0.8, dom, vt2)
    assert r1 < 1e-4
    assert r2 < 0.6 * r1


def test_heat_identity_centered_differences_telescope():
    # with v_t from the audit's own centered differences, trapezoid
    # weights telescope the cross term into the exact boundary term (a
    # discrete product rule), so the residual sits at machine precision
    # at any step size
    dom = _domain(4)
    rng = np.random.default_rng(46)
    base = rng.standard_normal(4)
    t = np.arange(0.0, 1.0 + 1e-12, 0.05)
    v = np.exp(-0.6 * t)[:, None] * base[None, :] * np.cos(1.7 * t)[:, None]
    assert heat_identity_audit(t, v, 0.8, dom) < 1e-12


def test_heat_identity_instantiations_exact_constant():
    # constant-in-time fields: every instantiation reduces to
    # int |a A v|^2 = a^2 int |A v|^2, exact under the trapezoid rule
    dom = _domain()
    rng = np.random.default_rng(44)
    t = np.linspace(0.0, 1.0, 21)
    traj = _constant_traj(dom, rng.standard_normal(8), t)
    residuals = heat_identity_instantiations(traj, ModelParams(1, 1, 1, 0.0, 0))
    assert set(residuals) == {"u_ttt", "A_half_u_tt", "A_u_t", "A_u"}
    for value in residuals.values():
        assert value < 1e-12


# ---------------------------------------------------------------------------
# factorization residual
# ---------------------------------------------------------------------------


def _exact_linear_modal_traj(dom, params, lam_index, t_grid):
    """Sample the exact single-mode linear solution via the 3x3 exponential."""
    from scipy.linalg import expm

    lam = dom.eigenvalue_grid[lam_index]
    block = np.array(
        [
            [0.0, 1.0, 0.0],
            [-params.c**2 * lam, -params.b * lam, 1.0],
            [0.0, 0.0, -params.a * lam],
        ]
    )
    u0 = np.array([0.4, -0.3, 0.8])
    nt = t_grid.size
    u = np.zeros((nt, dom.modes_per_axis))
    ut = np.zeros_like(u)
    utt = np.zeros_like(u)
    uttt = np.zeros_like(u)
    for i, t in enumerate(t_grid):
        vec = expm(t * block) @ u0
        u[i, lam_index] = vec[0]
        ut[i, lam_index] = vec[1]
        utt_val = vec[2] - params.b * lam * vec[1] - params.c**2 * lam * vec[0]
        utt[i, lam_index] = utt_val
        uttt[i, lam_index] = (
            -(params.a + params.b) * lam * utt_val
            - (params.c**2 * lam + params.a * params.b * lam**2) * vec[1]
            - params.a * params.c**2 * lam**2 * vec[0]
        )
    return _Traj(dom, t_grid, u, ut, utt, uttt)


def test_factorization_residual_exact_linear():
    dom = _domain(4)
    params = ModelParams(1.0, 1.0, 1.0, 0.0, 0)
    t = np.arange(0.0, 1.0 + 1e-12, 1e-2)
    traj = _exact_linear_modal_traj(dom, params, 0, t)
    assert factorization_residual(traj, params, use_stored=True) < 1e-12


def test_factorization_residual_finite_difference_refines():
    dom = _domain(4)
    params = ModelParams(1.0, 1.0, 1.0, 0.0, 0)
    t1 = np.arange(0.0, 1.0 + 1e-12, 2e-3)
    t2 = np.arange(0.0, 1.0 + 1e-12, 1e-3)
    r1 = factorization_residual(
        _exact_linear_modal_traj(dom, params, 0, t1), params, use_stored=False
    )
    r2 = factorization_residual(
        _exact_linear_modal_traj(dom, params, 0, t2), params, use_stored=False
    )
    assert r1 < 1e-4
    assert r2 < 0.6 * r1


def test_forcing_series_matches_pointwise_forcing():
    from bck_sim.model import forcing_f

    dom = _domain(4)
    params = ModelParams(1, 1, 1, 0.3, 1)
    rng = np.random.default_rng(45)
    t = np.linspace(0.0, 0.1, 3)
    traj = _Traj(
        dom,
        t,
        0.01 * rng.standard_normal((3, 4)),
        0.01 * rng.standard_normal((3, 4)),
        0.01 * rng.standard_normal((3, 4)),
        0.01 * rng.standard_normal((3, 4)),
    )
    series = forcing_series(traj, params)
    state = EvolutionState(
        float(t[1]),
        SpectralField(dom, traj.u[1]),
        SpectralField(dom, traj.ut[1]),
        SpectralField(dom, traj.utt[1]),
    )
    single = forcing_f(state, SpectralField(dom, traj.uttt[1]), params)
    np.testing.assert_array_equal(series[1], single.coeffs)


# ---------------------------------------------------------------------------
# estimate and barrier audits
# ---------------------------------------------------------------------------


def test_estimate_audit_zero_everything():
    dom = _domain(4)
    t = np.linspace(0.0, 1.0, 11)
    zeros = np.zeros((11, 4))
    traj = _Traj(dom, t, zeros, zeros, zeros, zeros)
    audit = estimate_audit_linear(traj, zeros, ModelParams(1, 1, 1, 0.2, 1))
    assert audit.c_min == 0.0


def test_estimate_audit_constant_state_closed_form():
    # u identically sin x, everything else zero, f = 0: E and k are
    # constants, lhs(t) = E + (E + k) t, rhs = E, so c_min = 1 + (1 + k/E) T
    dom = _domain(4)
    params = ModelParams(1, 1, 1, 0.0, 0)
    t = np.linspace(0.0, 1.0, 101)
    coeffs = np.zeros(4)
    coeffs[0] = 0.5
    traj = _constant_traj(dom, coeffs, t)
    audit = estimate_audit_linear(traj, np.zeros((101, 4)), params)
    e_val = 0.5**2 * WEIGHT  # E1 = E2 = c^2 w / 2 at lambda = 1, a = 1
    k_val = 0.5**2 * WEIGHT
    expected = (e_val + (e_val + k_val) * 1.0) / e_val
    assert abs(audit.c_min - expected) < 1e-10
    assert audit.lhs.shape == t.shape and audit.rhs.shape == t.shape


def test_estimate_audit_division_guard():
    # trajectory that starts at zero with zero forcing but grows: the
    # right-hand side vanishes identically while the left does not
    dom = _domain(4)
    t = np.linspace(0.0, 1.0, 5)
    u = np.zeros((5, 4))
    u[:, 0] = t**2
    zeros = np.zeros_like(u)
    traj = _Traj(dom, t, u, zeros, zeros, zeros)
    with pytest.raises(DivisionGuardError):
        estimate_audit_linear(traj, zeros, ModelParams(1, 1, 1, 0.0, 0))


def test_barrier_audit_zero_data_passes():
    dom = _domain(4)
    t = np.linspace(0.0, 1.0, 5)
    zeros = np.zeros((5, 4))
    traj = _Traj(dom, t, zeros, zeros, zeros, zeros)
    audit = barrier_audit(traj, eta=1e-6, c_hat=2.0, params=ModelParams(1, 1, 1, 0.0, 0))
    assert audit.passed
    assert audit.pointwise_ratio == 0.0 and audit.integrated_ratio == 0.0


def test_barrier_audit_decaying_series():
    # u(t) = e^{-t} sin x: E(t) = E0 e^{-2t}, k(t) = k0 e^{-2t}; closed
    # forms for both ratios decide pass/fail at the chosen c_hat
    dom = _domain(4)
    params = ModelParams(1, 1, 1, 0.0, 0)
    t = np.linspace(0.0, 2.0, 401)
    u = np.zeros((401, 4))
    u[:, 0] = 0.3 * np.exp(-t)
    zeros = np.zeros_like(u)
    traj = _Traj(dom, t, u, zeros, zeros, zeros)
    generous = barrier_audit(traj, eta=0.3**2 * WEIGHT, c_hat=4.0, params=params)
    assert generous.passed
    assert generous.pointwise_ratio <= 1.0
    stingy = barrier_audit(traj, eta=0.3**2 * WEIGHT, c_hat=1e-3, params=params)
    assert not stingy.passed


def test_barrier_audit_validates_inputs():
    dom = _domain(4)
    t = np.linspace(0.0, 1.0, 5)
    zeros = np.zeros((5, 4))
    traj = _Traj(dom, t, zeros, zeros, zeros, zeros)
    with pytest.raises(ValueError):
        barrier_audit(traj, eta=0.0, c_hat=1.0, params=ModelParams(1, 1, 1, 0.0, 0))


# ---------------------------------------------------------------------------
# decay fitting
# ---------------------------------------------------------------------------


def test_decay_fit_exact_exponential():
    t = np.linspace(0.0, 10.0, 201)
    series = 3.0 * np.exp(-0.7 * t)
    fit = decay_fit(t, series, window_fraction=0.5)
    assert abs(fit.omega - 0.7) < 1e-10
    assert abs(fit.M - 3.0) < 1e-10
    assert fit.residual < 1e-10
    assert fit.window[0] >= 5.0 - 1e-9 and fit.window[1] == 10.0


def test_decay_fit_full_window():
    t = np.linspace(0.0, 4.0, 41)
    fit = decay_fit(t, 2.0 * np.exp(-1.3 * t), window_fraction=1.0)
    assert abs(fit.omega - 1.3) < 1e-10
    assert fit.window[0] == 0.0


def test_decay_fit_rejects_nonpositive_entries():
    t = np.linspace(0.0, 1.0, 11)
    series = np.exp(-t)
    series[-2] = 0.0
    with pytest.raises(FitError):
        decay_fit(t, series, window_fraction=0.5)


def test_decay_fit_window_validation():
    t = np.linspace(0.0, 1.0, 11)
    with pytest.raises(ValueError):
        decay_fit(t, np.exp(-t), window_fraction=0.0)
    with pytest.raises(FitError):
        decay_fit(np.array([0.0, 1.0]), np.array([1.0, 0.5]), window_fraction=0.4)


# ---------------------------------------------------------------------------
# series evaluation
# ---------------------------------------------------------------------------


def test_energy_series_matches_pointwise_reports():
    dom = _domain()
    params = ModelParams(0.9, 1.1, 1.3, 0.0, 0)
    t = np.arange(0.0, 0.5 + 1e-12, 1e-2)
    traj = _exact_linear_modal_traj(dom, params, 1, t)
    series = energy_series(traj, params)
    i = 17
    state = EvolutionState(
        float(t[i]),
        SpectralField(dom, traj.u[i]),
        SpectralField(dom, traj.ut[i]),
        SpectralField(dom, traj.utt[i]),
    )
    report = energies(state, SpectralField(dom, traj.uttt[i]), params)
    assert abs(series["E1"][i] - report.E1) < 1e-12
    assert abs(series["E2"][i] - report.E2) < 1e-12
    assert abs(series["linear_energy"][i] - report.linear_energy) < 1e-12
    assert abs(series["H4_u"][i] - report.sobolev[("u", 4)]) < 1e-12
    assert abs(series["H3_ut"][i] - report.sobolev[("ut", 3)]) < 1e-12
    assert abs(series["Linf_ut"][i] - report.linf_ut) < 1e-12
    assert np.all(series["k_functional"] >= 0.0)
