import numpy as np

from hyperspot.clustering import ClusterAssignment
from hyperspot.dataio import SpatialCoords
from hyperspot.plotting import plot_domains, render_domain_svg


def tiny_setup(labels):
    n = len(labels)
    coords = SpatialCoords(
        np.column_stack([np.arange(n, dtype=float), np.zeros(n)]),
        tuple(f"s{i}" for i in range(n)),
    )
    return coords, ClusterAssignment(np.asarray(labels), method="kmeans")


def test_three_spots_two_labels_structure():
    coords, assignment = tiny_setup([0, 1, 0])
    svg = render_domain_svg(coords, assignment)
    assert svg.count("<circle") == 3
    assert svg.count('class="legend-entry"') == 2
    assert "0 (2)" in svg and "1 (1)" in svg
    assert 'viewBox="' in svg


def test_single_cluster_single_legend_entry():
    coords, assignment = tiny_setup([0, 0, 0, 0])
    svg = render_domain_svg(coords, assignment)
    assert svg.count("<circle") == 4
    assert svg.count('class="legend-entry"') == 1


def test_palette_cycles_beyond_twelve_labels():
    coords, assignment = tiny_setup(list(range(14)))
    svg = render_domain_svg(coords, assignment)
    assert svg.count('class="legend-entry"') == 14
    # label 12 reuses color 0, label 13 reuses color 1
    assert svg.count("#1f77b4") >= 2


def test_byte_identical_output(tmp_path):
    coords, assignment = tiny_setup([0, 1, 1, 0, 2])
    p1 = tmp_path / "a.svg"
    p2 = tmp_path / "b.svg"
    plot_domains(coords, assignment, str(p1))
    plot_domains(coords, assignment, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
