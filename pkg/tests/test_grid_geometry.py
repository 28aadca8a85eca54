"""Geometry oracles: parity lattice, the 16 edge types, Id round trips.

Expected values frozen up front: the five worked layout Ids 79985, 80001,
55420, 56236, 56287, the centred-layout count 60 = 24 + 36, and the
symmetric-only count 5**4 - 1 = 624.
"""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from patchwaves.grid_geometry import (
    EdgeLayerSpec,
    MicroGridSpec,
    N_LAYOUTS,
    NodeKind,
    PatchGridLayout,
    Stencil,
    classify_layout,
    count_centred,
    decode_id,
    edge_nodes,
    encode_id,
    enumerate_edge_types,
    is_compatible,
    iter_layouts,
    node_kind,
)


def test_full_domain_phase_matches_staggering():
    # phase (1,1) puts h on (even, even), u on (odd, even), v on (even, odd)
    assert node_kind(0, 0, (1, 1)) is NodeKind.H
    assert node_kind(1, 0, (1, 1)) is NodeKind.U
    assert node_kind(0, 1, (1, 1)) is NodeKind.V
    assert node_kind(1, 1, (1, 1)) is None


@given(st.integers(-20, 20), st.integers(-20, 20),
       st.integers(0, 1), st.integers(0, 1))
def test_each_site_holds_at_most_one_field(i, j, a, b):
    kinds = {node_kind(i + di, j + dj, (a, b)) for di, dj in
             [(0, 0), (1, 0), (0, 1), (1, 1)]}
    # one 2x2 micro-cell holds exactly one of each field and one hole
    assert kinds == {NodeKind.H, NodeKind.U, NodeKind.V, None}


def test_sixteen_edge_types():
    specs = enumerate_edge_types(6)
    assert len(specs) == 16
    assert len({s.name for s in specs}) == 16
    for s in specs:
        assert s.m_x == (6 if s.name[0] == s.name[1] else 5)
        assert s.m_y == (6 if s.name[2] == s.name[3] else 5)


@pytest.mark.parametrize(
    "name,centre",
    [
        ("uuvv", NodeKind.H),
        ("hhvv", NodeKind.U),
        ("uuhh", NodeKind.V),
        ("hhhh", None),
        ("uhvh", None),
        ("huvh", None),
        ("uhhv", None),
    ],
)
def test_centredness_n6(name, centre):
    assert MicroGridSpec.from_name(name, 6).centre is centre


@pytest.mark.parametrize(
    "name,centre",
    [
        ("hhhh", NodeKind.H),
        ("uuhh", NodeKind.U),
        ("hhvv", NodeKind.V),
        ("uuvv", None),
    ],
)
def test_centredness_flips_for_n4(name, centre):
    assert MicroGridSpec.from_name(name, 4).centre is centre


def test_interior_counts_n6():
    sizes = {
        name: len(MicroGridSpec.from_name(name, 6).interior_nodes())
        for name in ("uuvv", "hhvv", "uuhh", "hhhh", "uhvh")
    }
    assert sizes == {"uuvv": 21, "hhvv": 19, "uuhh": 19, "hhhh": 16, "uhvh": 12}


def test_edge_node_counts_single_layer():
    layers = EdgeLayerSpec(1, 0)
    counts = [
        len(edge_nodes(MicroGridSpec.from_name(nm, 6), layers))
        for nm in ("uuvv", "hhvv", "uuhh")
    ]
    assert counts == [12, 14, 14]
    assert sum(counts) == 8 * 6 - 8


@pytest.mark.parametrize("n,total", [(6, 92), (10, 164), (14, 236)])
def test_edge_node_counts_two_layers(n, total):
    layers = EdgeLayerSpec(2, 0)
    got = sum(
        len(edge_nodes(MicroGridSpec.from_name(nm, n), layers))
        for nm in ("uuvv", "hhvv", "uuhh")
    )
    assert got == total


def test_two_layer_strips_skip_corners():
    # u-centred patch: the parity lattice has v sites on its corners but
    # tangential_layers=0 must not include them
    spec = MicroGridSpec.from_name("hhvv", 6)
    sites = {(i, j) for i, j, _ in edge_nodes(spec, EdgeLayerSpec(2, 0))}
    assert (0, 0) not in sites and (6, 0) not in sites
    assert (0, 6) not in sites and (6, 6) not in sites


def test_all_sixteen_types_compatible_first_order():
    st_ideal = Stencil(viscous=False)
    for spec in enumerate_edge_types(6):
        assert is_compatible(spec, st_ideal)
    for spec in enumerate_edge_types(4):
        assert is_compatible(spec, st_ideal)


def test_uhvv_incompatible_if_right_edge_were_v():
    spec = MicroGridSpec.from_name("uhvv", 6)
    assert is_compatible(spec, Stencil())
    assert not is_compatible(
        spec, Stencil(), edge_kinds={"right": {NodeKind.V}}
    )


def test_viscous_stencil_needs_two_layers():
    spec = MicroGridSpec.from_name("uuvv", 6)
    assert not is_compatible(spec, Stencil(viscous=True), EdgeLayerSpec(1, 0))
    assert is_compatible(spec, Stencil(viscous=True), EdgeLayerSpec(2, 0))


@pytest.mark.parametrize(
    "text,grid_id",
    [
        ("uuvv,hhvv,uuhh,----", 79985),
        ("uuvv,hhvv,uuhh,uuvv", 80001),
        ("uhvh,hhvv,uuhh,----", 55420),
        ("uhvh,huvh,uhhv,----", 56236),
        ("uhvh,huvh,uuhh,----", 56287),
    ],
)
def test_worked_layout_ids(text, grid_id):
    layout = PatchGridLayout.from_string(text)
    assert encode_id(layout) == grid_id
    assert decode_id(grid_id).to_string() == text


def test_slot_lookup_uses_xy_parity():
    layout = decode_id(79985)
    assert layout.type_at(0, 0) == "uuvv"
    assert layout.type_at(1, 0) == "hhvv"  # u-centred at odd I
    assert layout.type_at(0, 1) == "uuhh"  # v-centred at odd J
    assert layout.type_at(1, 1) is None


@given(st.integers(1, N_LAYOUTS))
def test_id_round_trip(grid_id):
    layout = decode_id(grid_id)
    assert encode_id(layout) == grid_id
    again = PatchGridLayout.from_string(layout.to_string())
    assert encode_id(again) == grid_id


def test_id_bounds_rejected():
    with pytest.raises(ValueError):
        decode_id(0)
    with pytest.raises(ValueError):
        decode_id(N_LAYOUTS + 1)
    with pytest.raises(ValueError):
        PatchGridLayout((None, None, None, None))


def test_classify_worked_layouts():
    c = classify_layout(decode_id(79985))
    assert c.centred and c.symmetric_only
    c = classify_layout(decode_id(80001))
    assert c.centred and c.symmetric_only
    for gid in (55420, 56236, 56287):
        c = classify_layout(decode_id(gid))
        assert not c.centred and not c.symmetric_only
    # all centre kinds present but one patch non-centred: not centred
    c = classify_layout(PatchGridLayout(("uuvv", "hhvv", "uuhh", "uhvh")))
    assert not c.centred
    # all patches centred but a kind missing: not centred
    c = classify_layout(PatchGridLayout(("uuvv", "uuvv", "uuvv", None)))
    assert not c.centred


def test_census_of_layout_classes():
    centred = symmetric = 0
    for lay in iter_layouts(6):
        cls = classify_layout(lay)
        centred += cls.centred
        symmetric += cls.symmetric_only
    assert centred == 60
    assert symmetric == 5**4 - 1


def test_count_centred_both_parities():
    assert count_centred(6) == 60
    assert count_centred(4) == 60
