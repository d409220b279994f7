"""Density accumulation and observables against hand-computed values."""

import numpy as np
import pytest

from ctqw.density import DensityMatrix, accumulate_density, packed_length
from ctqw.errors import ConfigurationError, ConsistencyError
from ctqw.hilbert import JointSpace, build_lattice, joint_index
from ctqw.observables import (
    joint_distribution,
    participation_ratio,
    populations,
    position_variance,
    purity,
    trace_distance,
)
from ctqw.propagators import WaveFunction


def basis_state(dim, idx, dtype=np.complex128):
    psi = np.zeros(dim, dtype=dtype)
    psi[idx] = 1.0
    return psi


def rho_from_stack(stack, t=0.0):
    return accumulate_density(np.asarray(stack), time_tag=t)


def test_accumulate_matches_outer_product_average():
    rng = np.random.default_rng(3)
    stack = rng.normal(size=(12, 9)) + 1j * rng.normal(size=(12, 9))
    stack /= np.linalg.norm(stack, axis=1, keepdims=True)
    rho = rho_from_stack(stack, t=1.5)
    oracle = np.einsum("ra,rb->ab", stack, stack.conj()) / 12
    np.testing.assert_allclose(rho.dense(), oracle, atol=1e-14)
    assert rho.sample_count == 12
    assert rho.time_tag == 1.5
    assert rho.packed.shape == (packed_length(9),)
    assert rho.packed.dtype == np.complex128
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)


def test_accumulate_single_precision_states_in_double():
    rng = np.random.default_rng(4)
    stack = (rng.normal(size=(40, 64)) + 1j * rng.normal(size=(40, 64))).astype(
        np.complex64
    )
    stack /= np.linalg.norm(stack, axis=1, keepdims=True).astype(np.float32)
    rho = rho_from_stack(stack)
    assert rho.packed.dtype == np.complex128
    oracle = np.einsum(
        "ra,rb->ab", stack.astype(np.complex128), stack.conj().astype(np.complex128)
    ) / 40
    np.testing.assert_allclose(rho.dense(), oracle, atol=1e-12)


def test_accumulate_rejects_mixed_time_tags():
    states = [
        WaveFunction(basis_state(4, 0), time_tag=1.0),
        WaveFunction(basis_state(4, 1), time_tag=1.5),
    ]
    with pytest.raises(ConsistencyError):
        accumulate_density(states)
    with pytest.raises(ConsistencyError):
        accumulate_density([])
    with pytest.raises(ConsistencyError):
        accumulate_density(np.zeros((3, 3)))  # stack without a time tag


def test_accumulate_wavefunctions_carry_tag():
    states = [WaveFunction(basis_state(4, i % 2), time_tag=2.0) for i in range(6)]
    rho = accumulate_density(states)
    assert rho.time_tag == 2.0
    np.testing.assert_allclose(rho.diagonal().real, [0.5, 0.5, 0.0, 0.0], atol=1e-15)


def test_accumulate_deterministic():
    rng = np.random.default_rng(5)
    stack = rng.normal(size=(20, 30)) + 1j * rng.normal(size=(20, 30))
    a = rho_from_stack(stack).packed
    b = rho_from_stack(stack).packed
    np.testing.assert_array_equal(a, b)


def test_purity_pure_and_mixed():
    pure = rho_from_stack([basis_state(5, 2)])
    assert purity(pure) == pytest.approx(1.0, abs=1e-14)
    mixed = rho_from_stack([basis_state(5, i) for i in range(5)])
    assert purity(mixed) == pytest.approx(0.2, abs=1e-14)
    # Off-diagonal coherence contributes through the doubled triangle.
    plus = (basis_state(2, 0) + basis_state(2, 1)) / np.sqrt(2)
    assert purity(rho_from_stack([plus])) == pytest.approx(1.0, abs=1e-14)


def test_participation_ratio_extremes():
    d = 8
    localized = rho_from_stack([basis_state(d, 3)])
    assert participation_ratio(localized) == pytest.approx(1.0)
    uniform = rho_from_stack([np.full(d, 1 / np.sqrt(d), dtype=np.complex128)])
    assert participation_ratio(uniform) == pytest.approx(d)


def test_populations_counts_particles():
    space = JointSpace(lattice=build_lattice([5]), m=2)
    rho = rho_from_stack([basis_state(space.dim, joint_index([1, 3], space))])
    np.testing.assert_allclose(populations(rho, space), [0, 1, 0, 1, 0], atol=1e-15)
    rho = rho_from_stack([basis_state(space.dim, joint_index([2, 2], space))])
    np.testing.assert_allclose(populations(rho, space), [0, 0, 2, 0, 0], atol=1e-15)
    wrong_space = JointSpace(lattice=build_lattice([5]), m=1)
    with pytest.raises(ConsistencyError):
        populations(rho, wrong_space)


def test_position_moments_two_site_superposition():
    space = JointSpace(lattice=build_lattice([9]), m=1)
    psi = (basis_state(9, 1) + basis_state(9, 5)) / np.sqrt(2)
    stats = position_variance(rho_from_stack([psi]), space)
    assert stats.mean == pytest.approx(3.0)
    assert stats.variance == pytest.approx(4.0)
    assert not stats.wrapped


def test_position_variance_flags_wrapping():
    space = JointSpace(lattice=build_lattice([11]), m=1)
    edges = (basis_state(11, 0) + basis_state(11, 10)) / np.sqrt(2)
    assert position_variance(rho_from_stack([edges]), space).wrapped
    center = basis_state(11, 5)
    assert not position_variance(rho_from_stack([center]), space).wrapped
    # Open chains never wrap by construction.
    open_space = JointSpace(lattice=build_lattice([11], boundary="open"), m=1)
    assert not position_variance(rho_from_stack([edges]), open_space).wrapped


def test_position_variance_needs_one_direction():
    space = JointSpace(lattice=build_lattice([4, 4]), m=1)
    rho = rho_from_stack([basis_state(16, 0)])
    with pytest.raises(ConfigurationError):
        position_variance(rho, space)


def test_joint_distribution_is_real_diagonal():
    rng = np.random.default_rng(8)
    stack = rng.normal(size=(10, 6)) + 1j * rng.normal(size=(10, 6))
    stack /= np.linalg.norm(stack, axis=1, keepdims=True)
    rho = rho_from_stack(stack)
    probs = joint_distribution(rho)
    assert probs.dtype == np.float64
    assert probs.min() > -1e-14
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_trace_distance_known_values():
    a = rho_from_stack([basis_state(3, 0)])
    b = rho_from_stack([basis_state(3, 1)])
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-14)
    assert trace_distance(a, b) == pytest.approx(1.0, abs=1e-12)
    half = rho_from_stack([basis_state(2, 0), basis_state(2, 1)])
    pure = rho_from_stack([basis_state(2, 0)])
    assert trace_distance(pure, half) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ConsistencyError):
        trace_distance(a, pure)


def test_density_dense_is_hermitian():
    rng = np.random.default_rng(9)
    stack = rng.normal(size=(7, 12)) + 1j * rng.normal(size=(7, 12))
    rho = rho_from_stack(stack)
    dense = rho.dense()
    np.testing.assert_allclose(dense, dense.conj().T, atol=0)
    np.testing.assert_allclose(np.diag(dense), rho.diagonal(), atol=0)


def test_packed_layout_row_major():
    rho = DensityMatrix(
        packed=np.arange(6, dtype=np.complex128), dim=3, sample_count=1, time_tag=0.0
    )
    np.testing.assert_array_equal(rho.diagonal(), [0, 2, 5])
    dense = rho.dense()
    assert dense[1, 0] == 1 and dense[2, 0] == 3 and dense[2, 1] == 4
    with pytest.raises(ConsistencyError):
        DensityMatrix(packed=np.zeros(5), dim=3, sample_count=1, time_tag=0.0)
