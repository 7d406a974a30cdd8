import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_vectors, system_from_triangular
from drlmcts.errors import DegenerateChannelError, InvalidParameterError, InvalidSymbolError
from drlmcts.signal_model import (
    BPSK,
    QAM16,
    QPSK,
    ComplexChannelInstance,
    Constellation,
    PartialPath,
    branch_metric,
    draw_symbols,
    generate_varying_channel,
    get_constellation,
    path_metric,
    random_base_channel,
    simulate_system,
    slice_to_alphabet,
    snr_to_noise_variance,
    to_real_system,
)

CONSTELLATIONS = [BPSK, QPSK, QAM16]


def quad(a, b, x):
    r = a - b @ x
    return float(r @ r)


def random_system(rng, n_t, n_r, const, snr_db=10.0):
    base = random_base_channel(n_t, n_r, const, 0.0, int(rng.integers(1 << 30)))
    return simulate_system(base.H_c, const, snr_db, rng)


# -- constellations -----------------------------------------------------------

@pytest.mark.parametrize("const, energy", [(BPSK, 1.0), (QPSK, 2.0), (QAM16, 10.0)])
def test_symbol_energy_is_mean_over_alphabet(const, energy):
    lv = const.levels
    if const.is_real:
        expected = np.mean(lv ** 2)
    else:
        expected = np.mean([a * a + b * b for a in lv for b in lv])
    assert const.symbol_energy == pytest.approx(expected)
    assert const.symbol_energy == energy


@pytest.mark.parametrize("levels", [(1.0,), (1.0, -1.0), (-1.0, 2.0), (-1.0, 0.0, 0.0, 1.0)])
def test_bad_pam_levels_rejected(levels):
    with pytest.raises(InvalidParameterError):
        Constellation(levels, "X")


def test_lookup_by_name():
    assert get_constellation("qpsk") is QPSK
    assert get_constellation(" 16QAM ") is QAM16
    with pytest.raises(InvalidParameterError):
        get_constellation("8PSK")


def test_index_of():
    assert QAM16.index_of(1.0) == 2
    with pytest.raises(InvalidSymbolError):
        QAM16.index_of(2.0)


# -- varying channel ------------------------------------------------------------

def test_zero_epsilon_returns_base_exactly():
    base = random_base_channel(3, 4, QPSK, 0.0, 7)
    for j in (1, 2, 1000):
        assert np.array_equal(generate_varying_channel(base, j), base.H_c)


def test_bpsk_channel_is_real():
    base = random_base_channel(4, 4, BPSK, 0.3, 1)
    assert not np.iscomplexobj(base.H_c)
    assert not np.iscomplexobj(generate_varying_channel(base, 5))


def test_channel_is_deterministic_in_seed_and_index():
    base = random_base_channel(2, 2, QPSK, 0.5, 3)
    a = generate_varying_channel(base, 4)
    assert np.array_equal(a, generate_varying_channel(base, 4))
    assert not np.array_equal(a, generate_varying_channel(base, 5))


def test_unit_epsilon_draws_are_independent_of_base():
    base = random_base_channel(100, 100, BPSK, 1.0, 11)
    h1 = generate_varying_channel(base, 1).ravel()
    h2 = generate_varying_channel(base, 2).ravel()
    assert abs(np.corrcoef(h1, base.H_c.ravel())[0, 1]) < 0.05
    assert abs(np.corrcoef(h1, h2)[0, 1]) < 0.05


@pytest.mark.parametrize("eps", [0.1, 0.5, 0.9])
def test_mixing_preserves_entry_variance(eps):
    base = random_base_channel(100, 1000, QPSK, eps, 5)
    h = generate_varying_channel(base, 1)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, rel=0.02)


def test_channel_argument_checks():
    with pytest.raises(InvalidParameterError):
        ComplexChannelInstance(np.eye(2), 1.5, 0)
    base = random_base_channel(2, 2, BPSK, 0.1, 0)
    with pytest.raises(InvalidParameterError):
        generate_varying_channel(base, 0)


# -- real model and QR ----------------------------------------------------------

def test_pure_imaginary_identity_block_form():
    sys = to_real_system(1j * np.eye(2), np.zeros(2, complex), 1.0, QPSK)
    I, Z = np.eye(2), np.zeros((2, 2))
    assert np.array_equal(sys.H, np.block([[Z, -I], [I, Z]]))


def test_orthogonal_columns_give_diagonal_r():
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 3)))
    H = q * np.array([2.0, 0.5, 3.0])
    sys = to_real_system(H, np.zeros(5), 1.0, BPSK)
    assert np.allclose(sys.R, np.diag([2.0, 0.5, 3.0]), atol=1e-12)


@pytest.mark.parametrize("const", CONSTELLATIONS)
@pytest.mark.parametrize("n_t, n_r", [(2, 2), (3, 5), (4, 4)])
def test_real_system_invariants(const, n_t, n_r, rng):
    sys = random_system(rng, n_t, n_r, const)
    m, n = (n_t, n_r) if const.is_real else (2 * n_t, 2 * n_r)
    assert sys.H.shape == (n, m) and sys.R.shape == (m, m) and sys.Q_mat.shape == (n, m)
    assert sys.m == m and sys.n == n
    assert np.all(np.abs(np.tril(sys.R, -1)) <= 1e-10)
    assert np.all(np.diag(sys.R) > 0)
    assert np.allclose(sys.Q_mat.T @ sys.Q_mat, np.eye(m), atol=1e-9)
    assert np.linalg.norm(sys.H - sys.Q_mat @ sys.R) / np.linalg.norm(sys.H) < 1e-10
    assert np.array_equal(sys.y, sys.Q_mat.T @ sys.y_prime)


def test_projection_residual_is_constant(rng):
    sys = random_system(rng, 4, 4, QPSK)
    xs = sys.constellation.levels[rng.integers(0, 2, size=(100, sys.m))]
    gaps = [quad(sys.y_prime, sys.H, x) - quad(sys.y, sys.R, x) for x in xs]
    assert np.ptp(gaps) <= 1e-8 * max(1.0, abs(np.mean(gaps)))


def test_noise_split_per_real_dimension():
    H = np.eye(2)
    assert to_real_system(H, np.zeros(2), 0.8, BPSK).sigma_w2 == 0.8
    assert to_real_system(H + 0j, np.zeros(2, complex), 0.8, QPSK).sigma_w2 == 0.4


def test_rank_deficient_channel_rejected():
    H = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(DegenerateChannelError):
        to_real_system(H, np.zeros(2), 1.0, BPSK)


def test_wide_channel_rejected():
    with pytest.raises(InvalidParameterError):
        to_real_system(np.ones((2, 3)), np.zeros(2), 1.0, BPSK)


def test_simulated_noise_power(rng):
    # N_T sigma_x^2 / sigma_w^2 at 0 dB and unit channel: noise power per complex entry
    H = np.eye(50) + 0j
    sigma = snr_to_noise_variance(3.0, 50, QPSK.symbol_energy)
    resid = []
    for _ in range(40):
        sys = simulate_system(H, QPSK, 3.0, rng)
        resid.append(sys.y_prime - sys.H @ sys.x_true)
    assert np.var(np.concatenate(resid)) == pytest.approx(sigma / 2, rel=0.05)


# -- SNR ------------------------------------------------------------------------

def test_snr_examples():
    assert snr_to_noise_variance(10.0, 8, 1.0) == pytest.approx(0.8)
    assert snr_to_noise_variance(0.0, 1, 1.0) == 1.0
    values = [snr_to_noise_variance(s, 4, 2.0) for s in (0, 10, 20, 40, 80)]
    assert all(a > b for a, b in zip(values, values[1:]))
    with pytest.raises(InvalidParameterError):
        snr_to_noise_variance(math.inf, 1, 1.0)


# -- metrics ----------------------------------------------------------------------

@pytest.fixture
def tiny():
    return system_from_triangular([[1.0, 0.5], [0.0, 2.0]], [1.0, 2.0])


def test_branch_metric_worked_example(tiny):
    assert np.allclose(tiny.R, [[1.0, 0.5], [0.0, 2.0]])
    assert branch_metric(tiny, PartialPath(), 1.0) == 0.0
    path = PartialPath().extend(tiny, 1.0)
    assert branch_metric(tiny, path, 1.0) == pytest.approx(0.25, abs=1e-15)
    assert path_metric(tiny, [1.0, 1.0]) == pytest.approx(0.25, abs=1e-15)


def test_path_metric_edge_cases(tiny):
    assert path_metric(tiny, []) == 0.0
    with pytest.raises(InvalidSymbolError):
        path_metric(tiny, [0.5, 1.0])
    with pytest.raises(InvalidParameterError):
        path_metric(tiny, [1.0, 1.0, 1.0])
    full = PartialPath.from_tail(tiny, [1.0, 1.0])
    with pytest.raises(InvalidParameterError):
        branch_metric(tiny, full, 1.0)


def test_noiseless_truth_has_zero_branches(rng):
    base = random_base_channel(4, 4, QAM16, 0.0, 2)
    sys = simulate_system(base.H_c, QAM16, 0.0, rng, sigma_w2=1e-30)
    path = PartialPath()
    for v in sys.x_true[::-1]:
        path = path.extend(sys, v)
        assert path.last_branch < 1e-20


@pytest.mark.parametrize("const, n_t", [(BPSK, 8), (QPSK, 4), (QAM16, 2)])
def test_full_path_metric_matches_quadratic_form(const, n_t, rng):
    for _ in range(20):
        sys = random_system(rng, n_t, n_t, const)
        x = draw_symbols(const, n_t, rng)
        assert path_metric(sys, x) == pytest.approx(quad(sys.y, sys.R, x), rel=1e-9, abs=1e-9)


def test_partial_path_bookkeeping(rng):
    sys = random_system(rng, 3, 3, QAM16)
    x = draw_symbols(QAM16, 3, rng)
    path = PartialPath()
    assert path.step == 0 and path.cum_metric == 0.0
    branches = []
    for k in range(sys.m - 1, -1, -1):
        path = path.extend(sys, x[k])
        branches.append(path.last_branch)
        assert path.step == len(path.symbols) == sys.m - k
        assert np.array_equal(path.tail(), x[k:])
        assert path.cum_metric == path_metric(sys, x[k:])
        assert path.cum_metric == pytest.approx(sum(branches), abs=1e-9)


@pytest.mark.parametrize("const, n_t", [(BPSK, 2), (BPSK, 8), (QPSK, 4), (QAM16, 2)])
def test_argmin_equivalence_exhaustive(const, n_t, rng):
    sys = random_system(rng, n_t, n_t + 1, const, snr_db=5.0)
    cands = all_vectors(const.levels, sys.m)
    via_r = np.sum((sys.y - cands @ sys.R.T) ** 2, axis=1)
    via_h = np.sum((sys.y_prime - cands @ sys.H.T) ** 2, axis=1)
    assert np.argmin(via_r) == np.argmin(via_h)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(CONSTELLATIONS), st.integers(1, 4),
       st.floats(-5, 30))
def test_metric_decomposition_property(seed, const, n_t, snr):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, n_t, n_t + int(rng.integers(0, 3)), const, snr)
    x = draw_symbols(const, n_t, rng)
    total = path_metric(sys, x)
    assert total >= 0
    assert total == pytest.approx(quad(sys.y, sys.R, x), rel=1e-9, abs=1e-9)
    gap = quad(sys.y_prime, sys.H, x) - total
    x2 = draw_symbols(const, n_t, rng)
    gap2 = quad(sys.y_prime, sys.H, x2) - path_metric(sys, x2)
    assert gap == pytest.approx(gap2, rel=1e-8, abs=1e-8)


# -- slicer ------------------------------------------------------------------------

def test_slicer_ties_go_down():
    assert np.array_equal(slice_to_alphabet([0.0, 2.0, -2.0, 2.1], QAM16), [-1.0, 1.0, -3.0, 3.0])


@given(st.lists(st.sampled_from([-3.0, -1.0, 1.0, 3.0]), min_size=1, max_size=10))
def test_slicer_idempotent(values):
    assert np.array_equal(slice_to_alphabet(values, QAM16), values)
