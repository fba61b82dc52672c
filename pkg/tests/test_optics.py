import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greenmachine.codebook import bpsk_hadamard_codeword, hadamard_matrix
from greenmachine.errors import InvalidArgument, InvalidState
from greenmachine.optics import (ChannelModel, DualRailState, GreenMachineConfig, StageParams,
                                 apply_channel, apply_stage, gm_transfer_matrix,
                                 green_machine_transform, off_slot_fraction,
                                 output_slot_energies, phase_error_for_crosstalk,
                                 slot_permutation)


def _reference_transfer(n, phase_errors=None):
    """Independent oracle: product of explicit 2N x 2N stage matrices.

    Mode index = rail * N + bin.  Each stage pairs bin t (early) with t + d.
    """
    k = n.bit_length() - 1
    phase_errors = phase_errors or [0.0] * k
    m = np.zeros((2 * n, n), complex)
    m[:n] = np.eye(n)
    for s, e in enumerate(phase_errors, start=1):
        d = n >> s
        st = np.zeros((2 * n, 2 * n), complex)
        for t in range(n):
            if t % (2 * d) >= d:
                continue
            for rail in (0, 1):
                early, late = rail * n + t, rail * n + t + d
                for out_rail, sign in ((0, 1), (1, -1)):
                    st[out_rail * n + t + out_rail * d, early] += np.exp(0.5j * e) / np.sqrt(2)
                    st[out_rail * n + t + out_rail * d, late] += sign * np.exp(-0.5j * e) / np.sqrt(2)
        m = st @ m
    return m


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_transfer_matrix_matches_explicit_product(n):
    np.testing.assert_allclose(gm_transfer_matrix(GreenMachineConfig.build(n.bit_length() - 1, 1e-9)),
                               _reference_transfer(n), atol=1e-12)


def test_transfer_with_phase_errors_matches_oracle():
    errs = [0.3, -1.1, 2.0]
    cfg = GreenMachineConfig.build(3, 1e-9, errs)
    np.testing.assert_allclose(gm_transfer_matrix(cfg), _reference_transfer(8, errs), atol=1e-12)


@pytest.mark.parametrize("n", [2, 4, 8, 16, 32, 64])
def test_ideal_gm_maps_codeword_j_to_slot_j(n):
    cfg = GreenMachineConfig.build(n.bit_length() - 1, 1e-9)
    e = output_slot_energies(hadamard_matrix(n).astype(complex), cfg)
    np.testing.assert_allclose(e, n * np.eye(n), atol=1e-10)
    np.testing.assert_array_equal(slot_permutation(cfg), np.arange(1, n + 1))


def test_odd_slots_upper_rail_even_slots_lower_rail():
    cfg = GreenMachineConfig.build(3, 1e-9)
    for j in range(1, 9):
        out = green_machine_transform(bpsk_hadamard_codeword(j, 8, 1.0, 1e-9), cfg)
        rail = out.upper if j % 2 else out.lower
        assert abs(rail[j - 1]) ** 2 == pytest.approx(8)


def test_pi_error_on_last_stage_swaps_slot_pairs():
    cfg = GreenMachineConfig.build(3, 1e-9, [0, 0, np.pi])
    np.testing.assert_array_equal(slot_permutation(cfg), [2, 1, 4, 3, 6, 5, 8, 7])
    assert off_slot_fraction(cfg) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("x,k", [(0.01, 1), (0.038, 2), (0.07, 3), (0.113, 4)])
def test_crosstalk_tuning(x, k):
    e = phase_error_for_crosstalk(x, k)
    assert off_slot_fraction(GreenMachineConfig.build(k, 1e-9, [e] * k)) == pytest.approx(x, rel=1e-9)
    assert off_slot_fraction(GreenMachineConfig.build(k, 1e-9, [-e] * k)) == pytest.approx(x, rel=1e-9)


def test_stage_loss_scales_energy():
    cfg = GreenMachineConfig.build(5, 1e-9, loss_db_per_stage=0.4)
    e = output_slot_energies(hadamard_matrix(32).astype(complex), cfg)
    assert e.sum(axis=1) == pytest.approx(np.full(32, 32 * 10 ** (-0.2)))
    assert cfg.transmission == pytest.approx(10 ** (-0.2))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.lists(st.floats(-np.pi, np.pi), min_size=6, max_size=6))
def test_lossless_gm_is_unitary_for_any_phase_errors(k, errs):
    m = gm_transfer_matrix(GreenMachineConfig.build(k, 1e-9, errs[:k]))
    n = 2**k
    np.testing.assert_allclose(m.conj().T @ m, np.eye(n), atol=1e-12)


def test_apply_stage_rejects_misaligned_state():
    cfg = GreenMachineConfig.build(2, 1e-9)
    with pytest.raises(InvalidState):
        apply_stage(DualRailState(np.ones(4)), cfg.stages[1], 2)
    with pytest.raises(InvalidState):
        apply_stage(DualRailState(np.ones(8)), cfg.stages[0], 1)


def test_transform_length_mismatch():
    with pytest.raises(InvalidArgument):
        green_machine_transform(bpsk_hadamard_codeword(1, 4, 1, 1e-9), GreenMachineConfig.build(3, 1e-9))


def test_config_validation():
    with pytest.raises(InvalidArgument):
        GreenMachineConfig((StageParams(1), StageParams(1)), 1e-9)
    with pytest.raises(InvalidArgument):
        StageParams(3)
    with pytest.raises(InvalidArgument):
        GreenMachineConfig.build(2, 1e-9, [0.0])


def test_channel_phase_ramp_at_bin_centers():
    ch = ChannelModel(attenuation=0.25, drift_rate=1e5)
    cw = apply_channel(bpsk_hadamard_codeword(1, 8, 1.0, 20e-9), ch)
    phases = np.unwrap(np.angle(cw.amplitudes))
    np.testing.assert_allclose(np.diff(phases), 2 * np.pi * 1e5 * 20e-9)
    # one full codeword spans 2 pi f N tau = 0.1005 rad
    assert 2 * np.pi * 1e5 * 8 * 20e-9 == pytest.approx(0.1005, abs=1e-4)
    assert np.abs(cw.amplitudes) == pytest.approx(np.full(8, 0.5))


def test_global_phase_leaves_output_energies_unchanged():
    cfg = GreenMachineConfig.build(4, 1e-9, [0.2, -0.4, 0.1, 0.3])
    a = hadamard_matrix(16)[5] * 0.3
    np.testing.assert_allclose(output_slot_energies(a * np.exp(1.234j), cfg),
                               output_slot_energies(a, cfg), atol=1e-14)


def test_switch_frequencies_match_stage_periods():
    cfg = GreenMachineConfig.build(3, 20e-9)
    assert [cfg.switch_frequency(k) for k in (1, 2, 3)] == pytest.approx([6.25e6, 12.5e6, 25e6])
