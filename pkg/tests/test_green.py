import math

import numpy as np
import pytest

from conftest import bump_field
from lakesim.elliptic import (
    assemble_green_solution,
    green_disk,
    solve_green_remainder,
    solve_stream,
)
from lakesim.errors import CoincidentPoints, SourceTooCloseToBoundary, SupportTooClose
from lakesim.geometry import ScalarField, build_grid


def random_disk_points(n, seed):
    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(0.0, 1.0, n))
    t = rng.uniform(0.0, 2.0 * math.pi, n)
    return r * np.exp(1j * t)


def test_reflection_identity():
    x = random_disk_points(10000, 1)
    y = random_disk_points(10000, 2)
    ystar = y / np.abs(y) ** 2
    lhs = np.abs(x - ystar) ** 2 * np.abs(y) ** 2
    rhs = np.abs(x - y) ** 2 + (1 - np.abs(x) ** 2) * (1 - np.abs(y) ** 2)
    assert np.abs(lhs - rhs).max() <= 1e-12


def test_symmetry():
    x = random_disk_points(1000, 3)
    y = random_disk_points(1000, 4)
    assert np.abs(green_disk(x, y) - green_disk(y, x)).max() <= 1e-12


def test_value_at_origin_source():
    # the identity gives denominator 1 at y = 0
    assert green_disk(0.5 + 0j, 0j) == pytest.approx(math.log(0.5) / (2 * math.pi))


def test_vanishes_at_boundary():
    x = 0.999999 * np.exp(1j * np.linspace(0, 2 * math.pi, 64))
    vals = green_disk(x, 0.4 + 0.1j)
    assert np.abs(vals).max() < 1e-5


def test_coincident_points_rejected():
    with pytest.raises(CoincidentPoints):
        green_disk(0.3 + 0.2j, 0.3 + 0.2j)


def test_remainder_zero_for_flat_depth(grid_flat_64):
    rem = solve_green_remainder(grid_flat_64, 0j, delta=0.5)
    assert np.all(rem.s_field.values == 0.0)
    assert rem.grad_norm == 0.0


def test_remainder_source_distance_precondition(grid_a1_64):
    with pytest.raises(SourceTooCloseToBoundary):
        solve_green_remainder(grid_a1_64, 0.9 + 0j, delta=0.5)


def test_remainder_stable_under_refinement(disk_alpha1):
    norms = {}
    for n in (64, 128):
        g = build_grid(disk_alpha1, n)
        norms[n] = solve_green_remainder(g, 0j, delta=0.5).grad_norm
    assert norms[64] > 0
    assert abs(norms[128] - norms[64]) <= 0.25 * norms[64]


def test_remainder_bounded_over_sources(grid_a1_64):
    # both sources at distance >= delta stay below one recorded constant
    delta = 0.5
    g1 = solve_green_remainder(grid_a1_64, 0j, delta).grad_norm
    g2 = solve_green_remainder(grid_a1_64, 0.3 + 0.2j, delta).grad_norm
    c_delta = 1.5 * max(g1, g2)
    assert g1 <= c_delta and g2 <= c_delta


def test_assemble_zero_source(grid_a1_64):
    f = ScalarField(grid_a1_64, np.zeros(grid_a1_64.shape))
    psi = assemble_green_solution(grid_a1_64, f)
    assert np.all(psi.values == 0.0)


@pytest.mark.parametrize("alpha_fixture", ["grid_flat_64", "grid_a1_64"])
def test_assemble_matches_direct_solve(alpha_fixture, request):
    g = request.getfixturevalue(alpha_fixture)
    f = bump_field(g, radius=0.4)
    direct = solve_stream(g, f, 1e-8)
    via_kernel = assemble_green_solution(g, f, delta=0.1)
    num = np.abs(via_kernel.values - direct.psi.values)[g.interior].max()
    den = np.abs(direct.psi.values[g.interior]).max()
    assert num / den <= 5e-2


def test_assemble_rejects_support_near_boundary(grid_flat_64):
    f = bump_field(grid_flat_64, center=0.7 + 0j, radius=0.25)
    with pytest.raises(SupportTooClose):
        assemble_green_solution(grid_flat_64, f, delta=0.2)
