import json
import math

import numpy as np
import pytest

from netdeploy.errors import InvalidArgumentError
from netdeploy.network import (Network, build_collapsed, distance_to_network,
                               load_network, network_diameter, network_from_dict,
                               network_to_dict, project_to_network, save_network,
                               validate_network)
from netdeploy.scenario import random_network


def test_minimal_network_valid():
    n = Network([(0, 0), (1, 0)], [(0, 1)])
    assert validate_network(n) == []


def test_isolated_vertex_reported():
    n = Network([(0, 0), (1, 0), (5, 5)], [(0, 1)])
    violations = validate_network(n)
    assert len(violations) == 1
    assert violations[0].kind == "isolated-vertex"
    assert violations[0].indices == (2,)


def test_crossing_segments_reported():
    # Segments (0,1) and (2,3) cross at (0.5, 0.5); verified by a direct
    # parametric intersection: (t, u) = (0.5, 0.5), both interior.
    n = Network([(0, 0), (1, 1), (1, 0), (0, 1)], [(0, 1), (2, 3)])
    violations = validate_network(n)
    kinds = [v.kind for v in violations]
    assert "segment-intersection" in kinds
    v = violations[kinds.index("segment-intersection")]
    assert v.indices == (0, 1)


def test_t_junction_allowed():
    # Vertex 2 touches the interior of segment (0,1): open interiors stay
    # disjoint, so this is legal.
    n = Network([(0, 0), (2, 0), (1, 0.0), (1, 1)], [(0, 2), (2, 1), (2, 3)])
    assert validate_network(n) == []


def test_collinear_overlap_reported():
    n = Network([(0, 0), (2, 0), (1, 0), (3, 0)], [(0, 1), (2, 3)])
    kinds = [v.kind for v in validate_network(n)]
    assert "segment-intersection" in kinds


def test_duplicate_vertex_and_segment_reported():
    n = Network([(0, 0), (1, 0), (0, 0)], [(0, 1), (1, 0), (1, 2)])
    kinds = {v.kind for v in validate_network(n)}
    assert "duplicate-vertex" in kinds
    assert "duplicate-segment" in kinds


def test_structural_errors_rejected_at_construction():
    with pytest.raises(InvalidArgumentError):
        Network([(0, 0), (1, 0)], [(0, 0)])
    with pytest.raises(InvalidArgumentError):
        Network([(0, 0), (1, 0)], [(0, 2)])


# -- collapsed network -------------------------------------------------------


def test_collapse_count_paper_rule():
    # ceil(1 / 0.3) = 4 barycenters for a unit segment.
    n = Network([(0, 0), (1, 0)], [(0, 1)])
    assert build_collapsed(n, 0.3).count == 4


def test_collapse_single_barycenter_is_midpoint():
    n = Network([(0, 0), (1, 0)], [(0, 1)])
    c = build_collapsed(n, 2.0)
    assert c.count == 1
    assert c.positions[0] == pytest.approx([0.5, 0.0])


def test_collapse_weights_uniform_density():
    n = Network([(0, 0), (2, 0)], [(0, 1)])
    c = build_collapsed(n, 1.0)
    assert c.positions == pytest.approx(np.array([[0.5, 0.0], [1.5, 0.0]]))
    assert c.weights == pytest.approx([1.0, 1.0])


def test_collapse_rejects_nonpositive_resolution():
    n = Network([(0, 0), (1, 0)], [(0, 1)])
    with pytest.raises(InvalidArgumentError):
        build_collapsed(n, 0.0)


def test_collapse_total_weight_is_midpoint_quadrature():
    rng = np.random.default_rng(3)
    for seed in range(5):
        net = random_network(seed, 10)
        c = build_collapsed(net, 0.37)
        assert c.total_weight() == pytest.approx(net.total_length(), rel=1e-12)
        # Weighted case: direct midpoint-rule oracle.
        dens = lambda pts: 1.0 + pts[:, 0] ** 2
        c2 = build_collapsed(net, 0.37, dens)
        oracle = float((dens(c2.positions) * c2.sub_lengths).sum())
        assert c2.total_weight() == pytest.approx(oracle, rel=1e-12)


def test_collapse_coarse_resolution_gives_midpoints():
    net = random_network(2, 8)
    r = float(net.segment_lengths.max())
    c = build_collapsed(net, r)
    assert c.count == net.segment_count
    mids = 0.5 * (net.segment_starts + net.segment_ends)
    assert c.positions == pytest.approx(mids)


def test_collapse_halving_growth_bound():
    net = random_network(4, 12)
    for r in (0.8, 0.4, 0.2):
        n1 = build_collapsed(net, r).count
        n2 = build_collapsed(net, r / 2).count
        assert n2 <= 2 * n1 + net.segment_count


def test_collapsed_barycenters_lie_on_network():
    net = random_network(7, 9)
    c = build_collapsed(net, 0.3)
    for p in c.positions:
        assert distance_to_network(net, p) < 1e-9


# -- projection and diameter ---------------------------------------------------


def test_projection_idempotent_on_network():
    n = Network([(0, 0), (2, 0), (2, 2)], [(0, 1), (1, 2)])
    foot, k, t = project_to_network(n, (1.0, 0.0))
    assert (foot.x, foot.y) == (1.0, 0.0)
    assert k == 0 and t == pytest.approx(0.5)


def test_projection_orthogonal():
    n = Network([(0, 0), (2, 0)], [(0, 1)])
    foot, _, _ = project_to_network(n, (1, 1))
    assert (foot.x, foot.y) == (1.0, 0.0)


def test_projection_tie_lowest_segment_index():
    # Point equidistant from two parallel segments.
    n = Network([(0, 1), (2, 1), (0, -1), (2, -1)], [(0, 1), (2, 3)])
    _, k, _ = project_to_network(n, (1.0, 0.0))
    assert k == 0


def test_projection_zero_distance_iff_on_network():
    net = random_network(9, 7)
    rng = np.random.default_rng(0)
    for _ in range(30):
        k = int(rng.integers(net.segment_count))
        t = float(rng.random())
        q = net.segment_starts[k] + t * (net.segment_ends[k] - net.segment_starts[k])
        assert distance_to_network(net, q) < 1e-9
    assert distance_to_network(net, (1e3, 1e3)) > 1.0


def test_diameter_single_segment():
    assert network_diameter(Network([(0, 0), (5, 0)], [(0, 1)])) == 5.0


def test_diameter_unit_square():
    n = Network([(0, 0), (1, 0), (1, 1), (0, 1)],
                [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert network_diameter(n) == pytest.approx(math.sqrt(2))


def test_diameter_v_shape():
    # Max over vertex pairs: |(1,0) - (0,1)| = sqrt(2).
    n = Network([(0, 0), (1, 0), (0, 1)], [(0, 1), (0, 2)])
    assert network_diameter(n) == pytest.approx(math.sqrt(2))


# -- file round trip ------------------------------------------------------------


def test_network_json_round_trip(tmp_path):
    net = random_network(1, 8)
    path = tmp_path / "net.json"
    save_network(net, path)
    loaded = load_network(path)
    assert np.array_equal(loaded.vertex_array, net.vertex_array)
    assert loaded.segment_indices == net.segment_indices


def test_loader_refuses_invalid(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"vertices": [[0, 0], [1, 0], [9, 9]],
                                "segments": [[0, 1]]}))
    with pytest.raises(InvalidArgumentError, match="isolated"):
        load_network(path)


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(InvalidArgumentError):
        network_from_dict({"vertices": [[0, 0], [1, 0]], "segments": [[0, 1]],
                           "extra": 1})


def test_to_dict_round_trip():
    net = random_network(5, 6)
    again = network_from_dict(network_to_dict(net))
    assert np.array_equal(again.vertex_array, net.vertex_array)
