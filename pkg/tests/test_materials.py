import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proscan.exceptions import RangeError
from proscan.materials import DielectricTable, default_gold_table, index_glass, permittivity_gold


def test_node_value_matches_published_n_k():
    # Johnson & Christy list n = 0.62, k = 2.081 at 2.38 eV (520.942 nm); eps = (n + ik)^2
    n, k = 0.62, 2.081
    eps = permittivity_gold(520.942)
    assert eps.real == pytest.approx(n * n - k * k, abs=2e-3)
    assert eps.imag == pytest.approx(2 * n * k, abs=2e-3)


def test_532_is_metallic_and_lossy():
    eps = permittivity_gold(532.0)
    assert eps.real < 0 and eps.imag > 0
    # pinned fixture from the bundled table
    assert eps == pytest.approx(-4.704107925707676 + 2.3928925461841577j, rel=1e-12)


def test_interpolation_is_linear_between_nodes():
    t = default_gold_table()
    a, b = t.wavelengths[21], t.wavelengths[22]
    mid = permittivity_gold(0.5 * (a + b))
    assert mid == pytest.approx(0.5 * (t.permittivity[21] + t.permittivity[22]), rel=1e-12)


def test_out_of_range_raises():
    table = DielectricTable(np.array([450.0, 750.0]), np.array([-1 + 1j, -10 + 1j]))
    with pytest.raises(RangeError):
        permittivity_gold(400.0, table)


@given(st.floats(450.0, 750.0))
@settings(max_examples=200, deadline=None)
def test_interpolant_bounded_by_neighbouring_nodes(lam):
    t = default_gold_table()
    i = int(np.searchsorted(t.wavelengths, lam))
    lo, hi = t.permittivity[max(i - 1, 0)], t.permittivity[min(i, t.wavelengths.size - 1)]
    eps = permittivity_gold(lam)
    for part in (np.real, np.imag):
        assert min(part(lo), part(hi)) - 1e-12 <= part(eps) <= max(part(lo), part(hi)) + 1e-12


@pytest.mark.parametrize("wl, eps, msg", [
    ([450.0], [-1 + 1j], "at least 2"),
    ([450.0, 450.0, 750.0], [-1 + 1j] * 3, "increasing"),
    ([450.0, 750.0], [-1 - 1j, -1 + 1j], "passive"),
    ([500.0, 750.0], [-1 + 1j, -1 + 1j], "cover"),
])
def test_table_validation(wl, eps, msg):
    with pytest.raises(ValueError, match=msg):
        DielectricTable(np.array(wl), np.array(eps))


def test_csv_requires_header():
    with pytest.raises(ValueError, match="header"):
        DielectricTable.from_csv(io.StringIO("450,-1,1\n750,-2,1\n"))
    t = DielectricTable.from_csv(io.StringIO("wavelength_nm,eps_re,eps_im\n450,-1,1\n750,-3,2\n"))
    assert t(600.0) == pytest.approx(-2 + 1.5j)


def test_lipschitz_bound_controls_interpolation_error():
    t = default_gold_table()
    lam = np.linspace(450, 750, 301)
    assert np.all(np.abs(np.diff(permittivity_gold(lam))) <= t.lipschitz_bound() * 1.0 + 1e-12)


def test_glass_index():
    assert index_glass(532.0) == 1.52
    assert index_glass(650.0) == 1.52
    assert index_glass(400.0, override=1.45) == 1.45
    with pytest.raises(ValueError):
        index_glass(0.0)
