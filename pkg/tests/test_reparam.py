import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from gevforecast.reparam import DataBounds, RawHead, constrain, effective_xi, softplus, xi_bounds


class TestSoftplus:
    def test_values(self):
        assert softplus(0.0) == pytest.approx(math.log(2), abs=1e-15)
        assert softplus(100.0) == pytest.approx(100.0, abs=1e-15)
        assert 0 < softplus(-100.0) == pytest.approx(math.exp(-100), rel=1e-12)

    def test_torch_and_numpy_agree(self):
        x = np.linspace(-50, 50, 101)
        np.testing.assert_allclose(softplus(torch.from_numpy(x)).numpy(), softplus(x), rtol=1e-15)

    def test_no_overflow(self):
        assert np.isfinite(softplus(np.array([1e4, -1e4]))).all()


class TestXiBounds:
    @pytest.mark.parametrize(
        "sigma,mu,y_min,y_max,tau,want",
        [
            (1, 0, -2, 2, 0.0, (-0.5, 0.5)),
            (1, 0, -2, 2, 0.1, (-0.55, 0.55)),
            (2, 1, 0, 3, 0.0, (-1.0, 2.0)),
        ],
    )
    def test_substitution(self, sigma, mu, y_min, y_max, tau, want):
        lo, hi, degenerate = xi_bounds(sigma, mu, DataBounds(y_min, y_max, tau))
        assert (lo, hi) == pytest.approx(want, abs=1e-15)
        assert not degenerate

    def test_location_outside_range_is_flagged(self):
        b = DataBounds(-2, 2, 0.1)
        lo, hi, degenerate = xi_bounds(1.0, 3.0, b)
        assert degenerate
        assert lo < 0 < hi  # floored denominators keep the interval the right way round
        assert hi == pytest.approx(1.1 / 5.0)
        assert lo == pytest.approx(-1.1 / b.mu_eps)

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            DataBounds(1.0, 1.0)
        with pytest.raises(ValueError):
            DataBounds(0.0, 1.0, tau=-0.1)


class TestConstrain:
    def test_origin_example(self):
        c = constrain(RawHead(0.0, 0.0, 0.0, 0.0), DataBounds(-2, 2, 0.0))
        ln2 = math.log(2)
        assert c.sigma == pytest.approx(ln2)
        assert (c.bound_lo, c.bound_hi) == pytest.approx((-ln2 / 2, ln2 / 2))
        assert c.xi_u == pytest.approx(-0.3466, abs=1e-4)
        assert c.xi_l == pytest.approx(0.3466, abs=1e-4)
        assert c.mu == 0.0

    def test_limits(self):
        b = DataBounds(-2, 2, 0.1)
        c = constrain(RawHead(0.0, 0.0, 1e3, -1e3), b)
        assert c.xi_u < -900
        assert c.xi_l == pytest.approx(c.bound_lo, abs=1e-300)
        assert c.xi_l >= c.bound_lo

    def test_location_offset_shifts_only_the_bounds(self):
        b = DataBounds(-2, 2, 0.1)
        raw = RawHead(1.5, 0.3, 0.2, -0.1)
        c = constrain(raw, b, location_offset=1.5)
        ref = constrain(RawHead(0.0, 0.3, 0.2, -0.1), b)
        assert c.mu == 1.5
        assert (c.bound_lo, c.bound_hi, c.xi_u, c.xi_l) == pytest.approx(
            (ref.bound_lo, ref.bound_hi, ref.xi_u, ref.xi_l)
        )

    def test_effective_xi(self):
        b = DataBounds(-2, 2)
        c = constrain(RawHead(0.0, 0.0, 0.0, 0.0), b)
        c.xi_u, c.xi_l = 0.2, 0.19
        assert effective_xi(c) == 0.2


def test_bounds_never_violated_over_random_heads():
    rng = np.random.default_rng(0)
    n = 100_000
    y_min = rng.normal(0, 3, n)
    y_max = y_min + rng.exponential(5, n) + 1e-3
    mu = rng.uniform(y_min - 1, y_max + 1)  # includes locations outside the range
    raw = RawHead(mu, *(rng.normal(0, 10, (3, n))))
    violations = 0
    # DataBounds is scalar, so each block of 1000 heads shares one training range
    for k in range(100):
        sl = slice(k * 1000, (k + 1) * 1000)
        b = DataBounds(float(y_min[sl][0]), float(y_max[sl][0]), 0.1)
        c = constrain(RawHead(raw.mu_raw[sl], raw.p1[sl], raw.p2[sl], raw.p3[sl]), b)
        violations += int(np.sum(c.xi_u > c.bound_hi)) + int(np.sum(c.xi_l < c.bound_lo))
        assert np.all(c.sigma > 0)
    assert violations == 0


@settings(max_examples=300, deadline=None)
@given(
    y_min=st.floats(-10, 10),
    width=st.floats(0.1, 20),
    frac=st.floats(0.01, 0.99),
    p=st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5)),
    tau=st.floats(0, 0.5),
)
def test_margin_at_range_ends_when_ordered(y_min, width, frac, p, tau):
    b = DataBounds(y_min, y_min + width, tau)
    mu = y_min + frac * width
    c = constrain(RawHead(mu, *p), b)
    if c.xi_u < c.xi_l:
        return
    xi = effective_xi(c)
    for y in (b.y_min, b.y_max):
        assert 1 + xi * (y - mu) / c.sigma >= -tau - 1e-9


def test_constrain_is_c1():
    b = DataBounds(-2.0, 3.0, 0.1)

    def f(mu, p1, p2, p3):
        c = constrain(RawHead(mu, p1, p2, p3), b, location_offset=0.2)
        return c.sigma, c.xi_u, c.xi_l

    rng = np.random.default_rng(1)
    for _ in range(20):
        v = rng.normal(0, 1, 4)
        v[0] = rng.uniform(-1.5, 2.5)
        inputs = tuple(torch.tensor(x, dtype=torch.float64, requires_grad=True) for x in v)
        assert torch.autograd.gradcheck(f, inputs, eps=1e-6, atol=0, rtol=1e-5)
