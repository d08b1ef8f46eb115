import numpy as np
import pytest

from ccdispatch import model, qp
from ccdispatch.errors import ConfigError, ConvexityError
from ccdispatch.model import GeneratorParams, LoadParams, MicrogridConfig, Schedule, StorageParams

from conftest import small_cfg


def one_gen(T=1, L=10.0):
    return MicrogridConfig(T, [GeneratorParams(10, 30, 15, 15, 0.006, 0.5)], [], [], [L] * T)


def test_paper_config_dimensions(paper_cfg):
    assert paper_cfg.sizes == (3, 6, 3)
    assert paper_cfg.n_vars == 120
    q = model.build_qp(paper_cfg, np.zeros(8))
    assert q.n_vars == 120
    assert q.coupling_rows.size == 8


def test_quadratic_diagonal_matches_tables(paper_cfg):
    q = model.build_qp(paper_cfg, np.zeros(8))
    T = 8
    assert np.allclose(q.q[:T], 2 * 0.006)
    # utility enters with a minus sign, so the load curvature is -2c
    assert np.allclose(q.q[3 * T:4 * T], 2 * 0.0045)
    assert np.all(q.q >= 0)


def test_single_coupling_row():
    cfg = one_gen(L=10.0)
    q = model.build_qp(cfg, [0.0])
    row = q.A_in[q.coupling_rows[0]]
    assert row.tolist() == [-1.0]
    assert q.b_in[q.coupling_rows[0]] == -10.0
    assert q.row_labels[q.coupling_rows[0]] == "coupling[0]"


def test_build_qp_is_rhs_affine(paper_cfg):
    a = model.build_qp(paper_cfg, np.zeros(8))
    b = model.build_qp(paper_cfg, np.arange(8.0))
    assert np.array_equal(a.A_in, b.A_in) and np.array_equal(a.A_eq, b.A_eq)
    diff = np.flatnonzero(a.b_in != b.b_in)
    assert set(diff.tolist()) <= set(a.coupling_rows.tolist())
    assert np.allclose(model.coupling_rhs(paper_cfg, b), np.arange(8.0))


def test_net_load_examples(paper_cfg):
    z = Schedule.zeros(paper_cfg)
    assert np.allclose(model.net_load(paper_cfg, z), paper_cfg.base_load)
    assert model.net_load(paper_cfg, z)[0] == 43.35

    cfg = MicrogridConfig(1, [GeneratorParams(0, 60, 60, 60, 0, 0)], [LoadParams(0, 20, 0, 0)],
                          [StorageParams(30, 0, 0.0, p_b_min=-10, b_init=10)], [40.0])
    s = Schedule(p_g=np.array([[50.0]]), p_d=np.array([[10.0]]), p_b=np.array([[-5.0]]),
                 soc=np.array([[5.0]]))
    assert model.net_load(cfg, s).tolist() == [-5.0]


def test_cost_examples():
    cfg = one_gen()
    s = Schedule(p_g=np.array([[10.0]]), p_d=np.zeros((0, 1)), p_b=np.zeros((0, 1)), soc=np.zeros((0, 1)))
    assert model.evaluate_cost(cfg, s) == pytest.approx(5.6)

    cfg = MicrogridConfig(1, [], [LoadParams(1.5, 8, -0.0045, 0.15)], [], [0.0])
    s = Schedule(p_g=np.zeros((0, 1)), p_d=np.array([[8.0]]), p_b=np.zeros((0, 1)), soc=np.zeros((0, 1)))
    assert model.evaluate_cost(cfg, s) == pytest.approx(-0.912)

    cfg = MicrogridConfig(1, [], [], [StorageParams(30, 5, 0.1)], [0.0])
    s = Schedule(p_g=np.zeros((0, 1)), p_d=np.zeros((0, 1)), p_b=np.array([[10.0]]), soc=np.array([[30.0]]))
    assert model.evaluate_cost(cfg, s) == 0.0


def test_qp_objective_matches_cost(paper_cfg):
    q = model.build_qp(paper_cfg, np.full(8, 10.0))
    sol = qp.solve(q)
    assert sol.optimal
    sched = Schedule.from_vector(paper_cfg, sol.x)
    assert sol.value + paper_cfg.storage_constant() == pytest.approx(model.evaluate_cost(paper_cfg, sched), abs=1e-9)
    assert model.validate_schedule(paper_cfg, sched, np.full(8, 10.0), tol=1e-6) == []
    assert np.allclose(model.replay_soc(paper_cfg, sched.p_b), sched.soc, atol=1e-7)


def test_generator_violation():
    cfg = one_gen()
    s = Schedule(p_g=np.array([[31.0]]), p_d=np.zeros((0, 1)), p_b=np.zeros((0, 1)), soc=np.zeros((0, 1)))
    v = model.validate_schedule(cfg, s)
    got = {x.family: x.magnitude for x in v}
    # over-capacity output also eats the (zero) reserve margin
    assert got == pytest.approx({"gen_max": 1.0, "reserve": 1.0})


def test_efficiency_violation():
    cfg = MicrogridConfig(1, [], [], [StorageParams(30, 0, 0.0, eta=1.0, b_init=5)], [0.0])
    s = Schedule(p_g=np.zeros((0, 1)), p_d=np.zeros((0, 1)), p_b=np.array([[-6.0]]), soc=np.array([[-1.0]]))
    v = {x.family: x.magnitude for x in model.validate_schedule(cfg, s)}
    assert v["efficiency"] == pytest.approx(1.0)


def test_cost_monotone_in_rhs(paper_cfg):
    prev = np.inf
    for shift in (0.0, 2.0, 5.0, 10.0):
        sol = qp.solve(model.build_qp(paper_cfg, np.full(8, shift)))
        assert sol.value <= prev + 1e-7
        prev = sol.value


def test_rejects_nonconvex_and_bad_configs():
    with pytest.raises(ConvexityError):
        model.build_qp(MicrogridConfig(1, [GeneratorParams(0, 1, 1, 1, -0.1, 0)], [], [], [0.0]), [0.0])
    with pytest.raises(ConvexityError):
        model.build_qp(MicrogridConfig(1, [], [LoadParams(0, 1, 0.1, 0)], [], [0.0]), [0.0])
    with pytest.raises(ConfigError):
        GeneratorParams(10, 5, 1, 1, 0, 0)
    with pytest.raises(ConfigError):
        MicrogridConfig(2, [], [], [], [1.0, 2.0, 3.0])
    with pytest.raises(ConfigError):
        MicrogridConfig(2, [], [], [StorageParams(30, 5, [0.1, 0.2, 0.3])], [1.0, 2.0])
    with pytest.raises(ConfigError):
        model.config_from_dict({"horizon": 2})


def test_defaults(paper_doc):
    g = GeneratorParams(10, 30, 15, 15, 0.006, 0.5)
    assert g.p_init == 20.0
    st = StorageParams(30, 5, 0.1)
    assert st.b_init == 5
    cfg = small_cfg()
    assert cfg.spin_reserve.tolist() == [0.0, 0.0]


def test_preset_lookup():
    assert model.preset_path("paper_case").exists()
    with pytest.raises(ConfigError, match="available"):
        model.preset_path("nope")


def test_load_config_accepts_sections(tmp_path, paper_doc):
    import yaml
    p = tmp_path / "mg.yaml"
    p.write_text(yaml.safe_dump(paper_doc["microgrid"]))
    assert model.load_config(p).n_vars == 120
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        model.load_config(bad)
