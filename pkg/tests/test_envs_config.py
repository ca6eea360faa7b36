"""Environment generators and the YAML experiment-config layer."""
import numpy as np
import pytest

import approachrl as arl
from approachrl.config import (ConfigError, ExperimentConfig, build_mdp,
                               build_oracle, dump_config, load_config,
                               target_from_spec)
from approachrl.envs import generate, gridworld


# ---------------------------------------------------------------------------
# gridworld
# ---------------------------------------------------------------------------

def test_gridworld_shapes_and_layout():
    mdp, info = gridworld(width=3, height=2, gamma=0.9)
    S = 6
    assert mdp.num_states == S
    assert mdp.num_actions == 4
    assert mdp.dim == 2 + S
    # start in the top-left cell
    assert mdp.initial_dist[0] == 1.0 and mdp.initial_dist.sum() == 1.0
    # default goal bottom-right (idx 5), default unsafe cell (1, 1) -> idx 4
    assert info["goal"] == [1, 2]
    assert info["unsafe_cells"] == [[1, 1]]
    Z = mdp.measurement_mean
    assert np.all(Z[5, :, 0] == 1.0)            # goal reward
    assert np.all(Z[0, :, 0] == -0.04)          # step reward elsewhere
    assert np.all(Z[4, :, 1] == 1.0)            # unsafe indicator
    assert np.all(Z[[0, 1, 2, 3, 5], :, 1] == 0.0)
    for s in range(S):                          # cell one-hot
        onehot = np.zeros(S)
        onehot[s] = 1.0
        assert np.all(Z[s, :, 2:] == onehot)


def test_gridworld_wall_clipping():
    mdp, _ = gridworld(width=3, height=2, gamma=0.9, slip=0.0)
    # top-left cell: up and left bounce back, right goes to 1, down to 3
    assert mdp.transition[0, 0, 0] == 1.0
    assert mdp.transition[0, 2, 0] == 1.0
    assert mdp.transition[0, 3, 1] == 1.0
    assert mdp.transition[0, 1, 3] == 1.0


def test_gridworld_slip_mixes_actions():
    mdp, _ = gridworld(width=3, height=3, gamma=0.9, slip=1.0)
    # full slip: the chosen action is irrelevant
    for a in range(1, 4):
        np.testing.assert_allclose(mdp.transition[:, a, :], mdp.transition[:, 0, :])
    half, _ = gridworld(width=3, height=3, gamma=0.9, slip=0.5)
    np.testing.assert_allclose(half.transition.sum(axis=2), 1.0)


def test_gridworld_bound_is_max_cell_norm():
    mdp, info = gridworld(width=3, height=3, gamma=0.9,
                          step_reward=-0.04, goal_reward=1.0)
    unsafe_idx = {r * 3 + c for r, c in map(tuple, info["unsafe_cells"])}
    goal_idx = info["goal"][0] * 3 + info["goal"][1]
    expected = 0.0
    for s in range(9):
        r = 1.0 if s == goal_idx else -0.04
        u = 1.0 if s in unsafe_idx else 0.0
        expected = max(expected, np.sqrt(r * r + u * u + 1.0))
    assert mdp.bound == pytest.approx(expected)


def test_gridworld_presets_materialize():
    mdp, info = gridworld(width=2, height=2, gamma=0.5, unsafe_cells=[(0, 1)])
    safety = target_from_spec(info["presets"]["safety"])
    box = target_from_spec(info["presets"]["visitation-box"])
    assert isinstance(safety, arl.Polytope) and safety.dim == mdp.dim
    assert isinstance(box, arl.Box) and box.dim == mdp.dim
    assert not safety.is_cone and not box.is_cone
    assert np.all(box.lower <= box.upper)
    # the safety polytope caps the unsafe coordinate at 20% of the horizon mass
    z = np.zeros(mdp.dim)
    z[1] = 0.2 / (1.0 - mdp.gamma) - 1e-9
    assert arl.distance(safety, z) == pytest.approx(0.0, abs=1e-8)
    z[1] = 0.2 / (1.0 - mdp.gamma) + 0.1
    assert arl.distance(safety, z) > 0.05


def test_gridworld_validation():
    with pytest.raises(ValueError):
        gridworld(width=0, height=3)
    with pytest.raises(ValueError):
        gridworld(width=2, height=2, unsafe_cells=[(1, 1)], goal=(1, 1))


# ---------------------------------------------------------------------------
# random_mdp / generate dispatch
# ---------------------------------------------------------------------------

def test_random_mdp_shapes_and_bound():
    mdp = arl.random_mdp(5, 2, 4, gamma=0.8, seed=3)
    assert mdp.transition.shape == (5, 2, 5)
    assert mdp.measurement_mean.shape == (5, 2, 4)
    np.testing.assert_allclose(mdp.transition.sum(axis=2), 1.0)
    assert mdp.initial_dist.sum() == pytest.approx(1.0)
    assert mdp.bound == pytest.approx(
        np.max(np.linalg.norm(mdp.measurement_mean, axis=2)))


def test_random_mdp_seeding():
    a = arl.random_mdp(4, 2, 2, seed=1)
    b = arl.random_mdp(4, 2, 2, seed=1)
    c = arl.random_mdp(4, 2, 2, seed=2)
    assert np.array_equal(a.transition, b.transition)
    assert np.array_equal(a.measurement_mean, b.measurement_mean)
    assert not np.array_equal(a.transition, c.transition)


def test_generate_dispatch_and_presets():
    mdp, info = generate("random_mdp", seed=3, num_states=4, num_actions=2, dim=2)
    ball_spec = info["presets"]["origin-ball"]
    assert ball_spec["kind"] == "ball"
    assert ball_spec["radius"] == pytest.approx(mdp.bound / (1.0 - mdp.gamma) / 4.0,
                                                abs=1e-9)
    ball = target_from_spec(ball_spec)
    assert isinstance(ball, arl.Ball) and ball.dim == 2

    gmdp, ginfo = generate("gridworld", seed=0, width=2, height=2,
                           unsafe_cells=[(0, 1)])
    assert gmdp.num_states == 4 and "safety" in ginfo["presets"]

    with pytest.raises(ValueError):
        generate("maze")


# ---------------------------------------------------------------------------
# ExperimentConfig validation
# ---------------------------------------------------------------------------

def cone_cfg_dict():
    return {
        "algorithm": "cone_distance",
        "seed": 4,
        "rounds": 50,
        "mdp": {"generator": {"name": "random_mdp", "num_states": 4,
                              "num_actions": 2, "dim": 2}},
        "target": {"kind": "cone", "generators": [[-1.0, 0.0], [0.0, -1.0]]},
        "oracle": {"mode": "exact"},
    }


def test_config_from_dict_roundtrip(tmp_path):
    cfg = ExperimentConfig.from_dict(cone_cfg_dict())
    path = tmp_path / "exp.yaml"
    dump_config(cfg, path)
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()
    assert again.algorithm == "cone_distance"
    assert again.seed == 4 and again.rounds == 50


def test_config_rejects_unknown_keys():
    data = cone_cfg_dict()
    data["typo_key"] = 1
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict(data)


def test_config_requires_algorithm():
    with pytest.raises(ConfigError, match="algorithm"):
        ExperimentConfig.from_dict({"seed": 0})
    with pytest.raises(ConfigError, match="unknown algorithm"):
        ExperimentConfig.from_dict({"algorithm": "magic"})


def test_config_requires_blocks():
    data = cone_cfg_dict()
    del data["mdp"]
    with pytest.raises(ConfigError, match="mdp"):
        ExperimentConfig.from_dict(data)
    data = cone_cfg_dict()
    del data["target"]
    with pytest.raises(ConfigError, match="target"):
        ExperimentConfig.from_dict(data)
    with pytest.raises(ConfigError, match="game"):
        ExperimentConfig.from_dict({"algorithm": "solve_game"})


def test_config_mdp_block_needs_one_source():
    data = cone_cfg_dict()
    data["mdp"]["file"] = "also.mdp"
    with pytest.raises(ConfigError, match="exactly one"):
        ExperimentConfig.from_dict(data)
    data = cone_cfg_dict()
    data["mdp"] = {}
    with pytest.raises(ConfigError, match="exactly one"):
        ExperimentConfig.from_dict(data)


def test_config_reward_search_keys():
    data = cone_cfg_dict()
    data["algorithm"] = "maximize_reward"
    data["reward_search"] = {"coord": 0, "lo": 0.0}
    with pytest.raises(ConfigError, match="hi"):
        ExperimentConfig.from_dict(data)


def test_config_rounds_positive():
    data = cone_cfg_dict()
    data["rounds"] = 0
    with pytest.raises(ConfigError, match="rounds"):
        ExperimentConfig.from_dict(data)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("algorithm: [unclosed\n")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(bad)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def test_build_oracle():
    cfg = ExperimentConfig.from_dict({**cone_cfg_dict(),
                                      "oracle": {"mode": "sampled",
                                                 "max_episodes": 50}})
    oc = build_oracle(cfg)
    assert oc.mode == "sampled" and oc.max_episodes == 50
    cfg = ExperimentConfig.from_dict({**cone_cfg_dict(),
                                      "oracle": {"made_up_knob": 1}})
    with pytest.raises(ConfigError, match="bad oracle block"):
        build_oracle(cfg)


def test_build_mdp_generator_and_info():
    cfg = ExperimentConfig.from_dict(cone_cfg_dict())
    mdp, info = build_mdp(cfg)
    assert mdp.num_states == 4 and mdp.dim == 2
    assert "origin-ball" in info["presets"]
    # generator seed defaults to the experiment seed
    direct = arl.random_mdp(4, 2, 2, seed=4)
    assert np.array_equal(mdp.transition, direct.transition)


def test_build_mdp_from_file(tmp_path):
    src = arl.random_mdp(3, 2, 2, seed=8)
    path = tmp_path / "env.mdp"
    arl.save_mdp(src, path)
    data = cone_cfg_dict()
    data["mdp"] = {"file": str(path)}
    mdp, info = build_mdp(ExperimentConfig.from_dict(data))
    assert np.array_equal(mdp.transition, src.transition)
    assert info == {}


def test_build_mdp_inline():
    data = cone_cfg_dict()
    data["mdp"] = {"inline": {
        "initial_dist": [1.0],
        "transition": [[[1.0], [1.0]]],
        "measurement_mean": [[[1.0, 0.0], [0.0, 1.0]]],
        "gamma": 0.5,
        "bound": 1.0,
    }}
    mdp, _ = build_mdp(ExperimentConfig.from_dict(data))
    assert mdp.num_states == 1 and mdp.num_actions == 2 and mdp.dim == 2


def test_build_mdp_errors():
    data = cone_cfg_dict()
    data["mdp"] = {"generator": {"num_states": 3}}  # no name
    with pytest.raises(ConfigError, match="name"):
        build_mdp(ExperimentConfig.from_dict(data))
    data = cone_cfg_dict()
    data["mdp"] = {"inline": {"gamma": 0.5}}  # missing arrays
    with pytest.raises(ConfigError, match="bad mdp block"):
        build_mdp(ExperimentConfig.from_dict(data))
    data = cone_cfg_dict()
    data["mdp"] = {"file": "/nonexistent/path.mdp"}
    with pytest.raises(ConfigError, match="bad mdp block"):
        build_mdp(ExperimentConfig.from_dict(data))


# ---------------------------------------------------------------------------
# target specs
# ---------------------------------------------------------------------------

def test_target_from_spec_all_kinds():
    box = target_from_spec({"kind": "box", "lower": [0, 0], "upper": [1, 1]})
    assert isinstance(box, arl.Box)
    ball = target_from_spec({"kind": "ball", "center": [0, 0], "radius": 2})
    assert isinstance(ball, arl.Ball) and ball.radius == 2.0
    poly = target_from_spec({"kind": "polytope",
                             "normals": [[1, 0], [-1, 0], [0, 1], [0, -1]],
                             "offsets": [1, 0, 1, 0]})
    assert isinstance(poly, arl.Polytope)
    cone = target_from_spec({"kind": "cone", "generators": [[-1, 0], [0, -1]]})
    assert isinstance(cone, arl.GeneratorCone) and cone.is_cone
    lifted = target_from_spec({"kind": "lifted", "delta": 0.5,
                               "base": {"kind": "box", "lower": [0, 0],
                                        "upper": [1, 1]}})
    assert isinstance(lifted, arl.LiftedCone) and lifted.dim == 3


def test_target_from_spec_preset_resolution():
    _, info = generate("random_mdp", seed=0, num_states=3, num_actions=2, dim=2)
    ball = target_from_spec({"preset": "origin-ball"}, env_info=info)
    assert isinstance(ball, arl.Ball)
    with pytest.raises(ConfigError, match="no preset"):
        target_from_spec({"preset": "nope"}, env_info=info)
    with pytest.raises(ConfigError, match="no preset"):
        target_from_spec({"preset": "origin-ball"})  # no env info at all


def test_target_from_spec_errors():
    with pytest.raises(ConfigError, match="unknown target kind"):
        target_from_spec({"kind": "simplex"})
    with pytest.raises(ConfigError, match="must be a mapping"):
        target_from_spec(["box"])
    with pytest.raises(ConfigError, match="bad target spec"):
        target_from_spec({"kind": "ball", "center": [0, 0], "radius": -1})
    with pytest.raises(ConfigError, match="bad target spec"):
        target_from_spec({"kind": "box", "lower": [0, 0]})  # missing upper
