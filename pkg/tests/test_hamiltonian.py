"""Half-stored Hamiltonian against dense first-principles oracles."""

import numpy as np
import pytest

from ctqw.errors import CapacityError, ConfigurationError
from ctqw.hamiltonian import (
    CouplingModel,
    apply,
    apply_values,
    assemble,
    assemble_values,
    densify,
    update,
)
from ctqw.hilbert import JointSpace, build_lattice, build_topology, joint_index
from ctqw.noise import NoiseDelta, NoiseSpec, advance, init_process

from conftest import brute_dense_hamiltonian

CASES = [
    ("ring7_m2", dict(dims=[7]), 2, CouplingModel(tunneling=1.0, interaction=2.5)),
    (
        "chain8_k3_m1",
        dict(dims=[8], k_half=[3], boundary="open"),
        1,
        CouplingModel(onsite_energy=0.7, tunneling=-1.2),
    ),
    (
        "grid34_m2",
        dict(dims=[3, 4]),
        2,
        CouplingModel(tunneling=(1.0, 0.5), interaction=-1.0),
    ),
    (
        "grid43_open_m1",
        dict(dims=[4, 3], boundary="open"),
        1,
        CouplingModel(onsite_energy=-0.2, tunneling=(0.8, 1.3)),
    ),
    ("ring5_m3", dict(dims=[5]), 3, CouplingModel(interaction=4.0)),
]


def make_case(entry, with_noise, seed=3):
    _, kwargs, m, model = entry
    space = JointSpace(lattice=build_lattice(**kwargs), m=m)
    topo = build_topology(space)
    noise = None
    if with_noise:
        spec = NoiseSpec(target="both", levels=(-0.25, 0.0, 0.25), rate=1.0)
        noise = init_process(spec, topo, seed=seed)
    return space, topo, noise, model


def oracle_dense(space, model, noise):
    link = noise.link_values if noise is not None else None
    site = noise.site_values if noise is not None else None
    return brute_dense_hamiltonian(
        space,
        (model.onsite_energy, model.tunneling_per_direction(space.lattice.q),
         model.interaction),
        link_values=link,
        site_values=site,
    )


def test_coupling_model_validation():
    with pytest.raises(ConfigurationError):
        CouplingModel(hbar=0.0)
    with pytest.raises(ConfigurationError):
        CouplingModel(onsite_energy=np.nan)
    with pytest.raises(ConfigurationError):
        CouplingModel(tunneling=(1.0, np.inf))
    with pytest.raises(ConfigurationError):
        CouplingModel(tunneling=(1.0, 2.0)).tunneling_per_direction(3)
    np.testing.assert_array_equal(
        CouplingModel(tunneling=2.0).tunneling_per_direction(2), [2.0, 2.0]
    )


@pytest.mark.parametrize("entry", CASES, ids=[e[0] for e in CASES])
@pytest.mark.parametrize("with_noise", [False, True], ids=["clean", "noisy"])
def test_densify_matches_oracle(entry, with_noise):
    space, topo, noise, model = make_case(entry, with_noise)
    h = assemble(topo, model, noise=noise)
    k = space.lattice.neighbors_per_site
    assert h.values.shape == (space.dim, space.m * k // 2 + 1)
    dense = densify(h)
    np.testing.assert_allclose(dense, oracle_dense(space, model, noise), atol=1e-14)
    np.testing.assert_allclose(dense, dense.conj().T, atol=0)


@pytest.mark.parametrize("entry", CASES, ids=[e[0] for e in CASES])
@pytest.mark.parametrize("with_noise", [False, True], ids=["clean", "noisy"])
def test_apply_matches_dense(entry, with_noise):
    space, topo, noise, model = make_case(entry, with_noise)
    h = assemble(topo, model, noise=noise)
    dense = densify(h)
    rng = np.random.default_rng(11)
    psi = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    np.testing.assert_allclose(apply(h, psi), dense @ psi, rtol=1e-12, atol=1e-12)


def test_apply_single_precision():
    space, topo, noise, model = make_case(CASES[0], with_noise=True)
    h = assemble(topo, model, noise=noise, dtype=np.complex64)
    assert h.values.dtype == np.complex64
    rng = np.random.default_rng(4)
    psi = (rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)).astype(
        np.complex64
    )
    dense = densify(h)  # densify always promotes to double
    np.testing.assert_allclose(apply(h, psi), dense @ psi, rtol=1e-5, atol=1e-5)


def test_assemble_idempotent():
    space, topo, noise, model = make_case(CASES[2], with_noise=True)
    a = assemble(topo, model, noise=noise).values
    b = assemble(topo, model, noise=noise).values
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("target", ["tunneling", "onsite", "both"])
def test_update_equals_fresh_assembly(target):
    """Strict-delta rewrites land bit for bit on a from-scratch assembly."""
    space = JointSpace(lattice=build_lattice([9], k_half=[2]), m=2)
    topo = build_topology(space)
    model = CouplingModel(onsite_energy=0.3, tunneling=1.1, interaction=1.7)
    spec = NoiseSpec(target=target, levels=(-0.2, 0.2), rate=2.0)
    noise = init_process(spec, topo, seed=21)
    h = assemble(topo, model, noise=noise)
    for _ in range(25):
        delta = advance(noise, 0.15)
        touched = update(h, noise, delta)
        if not delta.changed:
            assert touched == 0
        fresh = assemble(topo, model, noise=noise)
        np.testing.assert_array_equal(h.values, fresh.values)


def test_update_touch_count_pair_ring():
    """One changed link rewrites m * N**(m-1) stored entries (here 2N)."""
    n = 31
    space = JointSpace(lattice=build_lattice([n]), m=2)
    topo = build_topology(space)
    model = CouplingModel()
    noise = init_process(NoiseSpec(rate=1.0), topo, seed=2)
    h = assemble(topo, model, noise=noise)
    noise.link_values[5] = 0.123
    delta = NoiseDelta(
        changed=True, links=np.array([5]), sites=np.empty(0, np.int64), switches=1
    )
    before = h.values.copy()
    assert update(h, noise, delta) == 2 * n
    assert np.count_nonzero(h.values != before) == 2 * n


def test_update_unchanged_is_noop():
    space, topo, noise, model = make_case(CASES[0], with_noise=True)
    h = assemble(topo, model, noise=noise)
    before = h.values.copy()
    delta = NoiseDelta(
        changed=False, links=np.empty(0, np.int64), sites=np.empty(0, np.int64),
        switches=0,
    )
    assert update(h, noise, delta) == 0
    np.testing.assert_array_equal(h.values, before)


def test_batched_assembly_and_apply_match_rowwise():
    space, topo, _, model = make_case(CASES[0], with_noise=False)
    spec = NoiseSpec(target="both", levels=(-0.3, 0.3), rate=1.0)
    procs = [init_process(spec, topo, seed=100 + r) for r in range(3)]
    links = np.stack([p.link_values for p in procs])
    sites = np.stack([p.site_values for p in procs])
    stack = assemble_values(topo, model, link_values=links, site_values=sites)
    assert stack.shape == (3, space.dim, topo.half + 1)
    rng = np.random.default_rng(9)
    psi = rng.normal(size=(3, space.dim)) + 1j * rng.normal(size=(3, space.dim))
    out = apply_values(topo, stack, psi)
    for r, proc in enumerate(procs):
        h = assemble(topo, model, noise=proc)
        np.testing.assert_array_equal(stack[r], h.values)
        np.testing.assert_array_equal(out[r], apply(h, psi[r]))


def test_interaction_sits_on_coincidences():
    space = JointSpace(lattice=build_lattice([5]), m=2)
    topo = build_topology(space)
    h = assemble(topo, CouplingModel(interaction=3.0))
    dense = densify(h)
    for x in range(5):
        assert dense[joint_index([x, x], space), joint_index([x, x], space)] == 3.0
    assert dense[joint_index([0, 2], space), joint_index([0, 2], space)] == 0.0


def test_densify_cap():
    space = JointSpace(lattice=build_lattice([40]), m=2)  # dim 1600
    topo = build_topology(space)
    h = assemble(topo, CouplingModel())
    with pytest.raises(CapacityError):
        densify(h, cap=1599)
    assert densify(h, cap=1600).shape == (1600, 1600)
