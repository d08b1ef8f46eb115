import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ccdispatch import scenario
from ccdispatch.errors import ScenarioError
from ccdispatch.scenario import CorrelationSpec, ScenarioSet, WecsParams

WECS = WecsParams()


def test_power_curve_points():
    assert scenario.speed_to_power(WECS, 2.0) == 0.0
    assert scenario.speed_to_power(WECS, 14.0) == 10.0
    assert scenario.speed_to_power(WECS, 8.5) == pytest.approx(5.0)
    assert scenario.speed_to_power(WECS, 20.0) == 10.0
    assert scenario.speed_to_power(WECS, 27.0) == 0.0


@given(st.floats(0, 100, allow_nan=False))
def test_power_curve_bounded(v):
    w = scenario.speed_to_power(WECS, v)
    assert 0.0 <= w <= WECS.w_rated


def test_paper_scale_generation(paper_wind):
    wecs, corr = paper_wind
    s = scenario.generate(wecs, corr, 4, 8, 1000, seed=7)
    assert s.samples.shape == (1000, 8)
    assert s.samples.min() >= 0 and s.samples.max() <= 40
    again = scenario.generate(wecs, corr, 4, 8, 1000, seed=7)
    assert np.array_equal(s.samples, again.samples)
    assert not np.array_equal(s.samples, scenario.generate(wecs, corr, 4, 8, 1000, seed=8).samples)


def test_smaller_draw_is_a_prefix(paper_wind):
    wecs, corr = paper_wind
    big = scenario.generate(wecs, corr, 4, 8, 300, seed=3)
    small = scenario.generate(wecs, corr, 4, 8, 100, seed=3)
    assert np.array_equal(big.head(100).samples, small.samples)


def test_per_farm_sums_to_aggregate(paper_wind):
    wecs, corr = paper_wind
    s = scenario.generate(wecs, corr, 4, 8, 50, seed=1, keep_farms=True)
    assert s.per_farm.shape == (50, 4, 8)
    assert np.allclose(s.per_farm.sum(axis=1), s.samples)


def test_independent_case_has_no_autocorrelation():
    corr = CorrelationSpec(np.eye(3), np.zeros(3))
    x = scenario.latent_field(corr, 20, 2000, seed=0)
    a, b = x[:, :, :-1].ravel(), x[:, :, 1:].ravel()
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_weibull_cdf_at_cut_in(paper_wind):
    _, corr = paper_wind
    z = scenario.latent_field(corr, 8, 4000, seed=11)
    v = scenario.weibull_speed(WECS, z)
    expect = 1 - np.exp(-(3 / 10) ** 2.2)
    assert expect == pytest.approx(0.0683, abs=1e-4)
    assert np.mean(v < 3.0) == pytest.approx(expect, abs=0.01)


def test_rejects_non_psd_correlation():
    C = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    with pytest.raises(ScenarioError, match="eigenvalue"):
        CorrelationSpec(C, np.zeros(3))
    with pytest.raises(ScenarioError):
        CorrelationSpec(np.eye(2), np.array([0.5, 1.0]))
    with pytest.raises(ScenarioError):
        CorrelationSpec(np.array([[1.0, 0.2], [0.3, 1.0]]), np.zeros(2))


def test_wecs_validation():
    with pytest.raises(ScenarioError):
        WecsParams(v_in=15)
    with pytest.raises(ScenarioError):
        WecsParams(c=0)


def test_survival_examples():
    s = ScenarioSet(np.array([[1, 1], [2, 2], [3, 0]], dtype=float))
    assert scenario.survival_joint(s, [1, 1]) == pytest.approx(2 / 3)
    assert scenario.survival_joint(s, scenario.worst_case(s)) == 1.0
    assert scenario.survival_joint(s, [3.5, 2.5]) == 0.0

    col = ScenarioSet(np.arange(1.0, 6.0)[:, None])
    assert scenario.survival_marginal(col, 1, 3) == pytest.approx(0.6)
    assert scenario.survival_marginal(col, 1, 0) == 1.0
    assert scenario.survival_marginal(col, 1, 6) == 0.0


def test_quantile_examples():
    col = ScenarioSet(np.arange(1.0, 6.0)[:, None])
    assert scenario.quantile_bound(col, 0.6).tolist() == [3.0]
    assert scenario.quantile_bound(col, 0.1).tolist() == [5.0]
    flat = ScenarioSet(np.full((7, 2), 4.25))
    for p in (0.1, 0.5, 0.99):
        assert scenario.quantile_bound(flat, p).tolist() == [4.25, 4.25]
    with pytest.raises(ScenarioError):
        scenario.quantile_bound(col, 1.0)


def test_worst_case_examples(paper_wind):
    assert scenario.worst_case(ScenarioSet(np.array([[1.0, 5], [2, 0]]))).tolist() == [1.0, 0.0]
    assert scenario.worst_case(ScenarioSet(np.array([[3.0, 4.0]]))).tolist() == [3.0, 4.0]
    wecs, corr = paper_wind
    s = scenario.generate(wecs, corr, 4, 8, 500, seed=2)
    assert scenario.survival_joint(s, scenario.worst_case(s)) == 1.0


def test_quota():
    assert scenario.quota(0.75, 12) == 9
    assert scenario.quota(0.95, 1000) == 950
    assert scenario.quota(2 / 3, 3) == 2
    assert scenario.quota(0.01, 10) == 1


samples = arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 4)),
                 elements=st.floats(0, 40, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(samples, st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_quantile_monotone_in_p(w, p1, p2):
    s = ScenarioSet(w)
    lo, hi = sorted((p1, p2))
    assert np.all(scenario.quantile_bound(s, hi) <= scenario.quantile_bound(s, lo))
    # the bound really has marginal survival >= p
    ell = scenario.quantile_bound(s, hi)
    for t in range(s.horizon):
        assert scenario.survival_marginal(s, t + 1, ell[t]) >= hi - 1e-12


@settings(max_examples=60, deadline=None)
@given(samples, st.data())
def test_joint_below_marginals(w, data):
    s = ScenarioSet(w)
    v = data.draw(arrays(np.float64, s.horizon, elements=st.floats(0, 40, allow_nan=False)))
    j = scenario.survival_joint(s, v)
    assert j <= min(scenario.survival_marginal(s, t + 1, v[t]) for t in range(s.horizon))


def test_csv_roundtrip(tmp_path, paper_wind):
    wecs, corr = paper_wind
    s = scenario.generate(wecs, corr, 4, 8, 20, seed=5)
    path = scenario.save_csv(s, tmp_path / "w.csv")
    assert path.read_text().splitlines()[0] == ",".join(f"t{t}" for t in range(1, 9))
    back = scenario.load_csv(path)
    assert np.array_equal(back.samples, s.samples)
    assert back.seed == 5 and back.meta["n_farms"] == 4


def test_csv_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t1,t2\n1.0,2.0\n3.0,oops\n")
    with pytest.raises(ScenarioError, match=r"bad.csv:3"):
        scenario.load_csv(p)
    p.write_text("t1,t2\n1.0\n")
    with pytest.raises(ScenarioError, match=r"bad.csv:2"):
        scenario.load_csv(p)
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ScenarioError, match=r"bad.csv:1"):
        scenario.load_csv(p)


def test_rejects_negative_samples():
    with pytest.raises(ScenarioError):
        ScenarioSet(np.array([[1.0, -0.5]]))
