import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emberline import env as E
from emberline.engine import RngKey, step_stochastic
from emberline.env import ACTIONS, N_ACTIONS, Action, EnvConfig, EnvState, Move, Valve
from emberline.grid import BURNED, BURNING, UNBURNED, CellIndex, SimConfig


@pytest.fixture(scope="module")
def cfg():
    return EnvConfig()


def _state(cfg, fire, agent=(0, 0), water=None, step=0, key=RngKey(0)):
    return EnvState(np.asarray(fire, dtype=np.int8), CellIndex(*agent), cfg.water if water is None else water, step, key)


def test_action_enumeration():
    assert N_ACTIONS == 10
    assert len(set(ACTIONS)) == 10
    for i, a in enumerate(ACTIONS):
        assert a.index == i and Action.from_index(i) == a


def test_reset_deterministic(cfg):
    a, obs_a = E.reset(cfg, RngKey(4, 0, 2))
    b, obs_b = E.reset(cfg, RngKey(4, 0, 2))
    assert np.array_equal(a.fire, b.fire) and a.agent == b.agent
    assert np.array_equal(obs_a.window, obs_b.window)


def test_reset_single_ignition_full_water(cfg):
    for stream in range(20):
        state, _ = E.reset(cfg, RngKey(1, 0, stream))
        assert np.count_nonzero(state.fire == BURNING) == 1
        assert np.count_nonzero(state.fire) == 1
        assert state.water == cfg.water and state.step == 0 and not state.done


def test_extinguishing_last_cell_gives_bonus(cfg):
    fire = np.zeros(cfg.dims, dtype=np.int8)
    fire[3, 4] = BURNING
    state = _state(cfg, fire, agent=(3, 3))
    nxt, _, reward, done = E.step(state, Action(Move.EAST, Valve.OPEN), cfg)
    assert done and reward == cfg.terminal_bonus
    assert nxt.fire[3, 4] == BURNED and nxt.water == cfg.water - 1


def test_penalty_per_burning_cell():
    # potentials vanish when p_base is tiny relative to one uniform draw
    cfg = EnvConfig(sim=SimConfig(p_base=1e-300, p_continue=1.0))
    fire = np.zeros(cfg.dims, dtype=np.int8)
    for c in range(5):
        fire[10, c] = BURNING
    _, _, reward, done = E.step(_state(cfg, fire, agent=(0, 19)), Action(Move.STAY, Valve.CLOSED), cfg)
    assert not done
    assert abs(reward - (-0.05 * 5)) < 1e-12


def test_move_clamped_at_west_edge(cfg):
    fire = np.zeros(cfg.dims, dtype=np.int8)
    fire[19, 19] = BURNING
    nxt, *_ = E.step(_state(cfg, fire, agent=(5, 0)), Action(Move.WEST, Valve.CLOSED), cfg)
    assert nxt.agent == (5, 0)


def test_move_directions(cfg):
    fire = np.zeros(cfg.dims, dtype=np.int8)
    fire[0, 0] = BURNING
    start = _state(cfg, fire, agent=(5, 5))
    for move, expect in [(Move.NORTH, (6, 5)), (Move.SOUTH, (4, 5)), (Move.EAST, (5, 6)), (Move.WEST, (5, 4)),
                         (Move.STAY, (5, 5))]:
        assert E.step(start, Action(move, Valve.CLOSED), cfg)[0].agent == expect


def test_water_use_rules():
    fire = np.zeros((5, 5), dtype=np.int8)
    fire[0, 0] = BURNING
    wasteful = EnvConfig(dims=(5, 5))
    nxt, *_ = E.step(_state(wasteful, fire, agent=(3, 3)), Action(Move.STAY, Valve.OPEN), wasteful)
    assert nxt.water == wasteful.water - 1
    frugal = EnvConfig(dims=(5, 5), waste_water=False)
    nxt, *_ = E.step(_state(frugal, fire, agent=(3, 3)), Action(Move.STAY, Valve.OPEN), frugal)
    assert nxt.water == frugal.water
    dry = _state(wasteful, fire, agent=(0, 1), water=0)
    nxt, *_ = E.step(dry, Action(Move.WEST, Valve.OPEN), wasteful)
    assert nxt.water == 0 and nxt.fire[0, 0] != BURNED


def test_stepping_done_episode_raises(cfg):
    state = EnvState(np.zeros(cfg.dims, dtype=np.int8), CellIndex(0, 0), 1, 3, RngKey(0), done=True)
    with pytest.raises(E.EpisodeDone):
        E.step(state, ACTIONS[0], cfg)


def test_step_limit_ends_episode():
    cfg = EnvConfig(dims=(4, 4), max_steps=3, sim=SimConfig(p_base=1e-300, p_continue=1.0))
    state, _ = E.reset(cfg, RngKey(2))
    for t in range(3):
        assert not state.done
        state, _, _, done = E.step(state, Action(Move.STAY, Valve.CLOSED), cfg)
    assert done and state.step == 3


def test_observation_window_layout():
    cfg = EnvConfig(dims=(4, 4), radius=1)
    fire = np.zeros((4, 4), dtype=np.int8)
    fire[1, 0] = BURNING
    fire[0, 1] = BURNED
    obs = E.observe(_state(cfg, fire, agent=(0, 0), water=15), cfg)
    assert obs.window.shape == (3, 3, 3)
    # window[i, j] shows cell (row - 1 + i, col - 1 + j)
    assert not obs.window[0].any() and not obs.window[:, 0].any()
    assert obs.window[2, 1].tolist() == [0, 1, 0]
    assert obs.window[1, 2].tolist() == [0, 0, 1]
    assert obs.window[1, 1].tolist() == [1, 0, 0]
    assert np.allclose(obs.scalars, [0.5, 0.0, 0.0])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_episode_invariants(stream):
    cfg = EnvConfig(dims=(8, 8), max_steps=40)
    state, obs = E.reset(cfg, RngKey(3, 0, stream))
    rng = np.random.default_rng(stream)
    bonuses = 0
    while not state.done:
        prev_water = state.water
        state, obs, reward, done = E.step(state, ACTIONS[int(rng.integers(N_ACTIONS))], cfg)
        assert 0 <= state.water <= prev_water
        assert 0 <= state.agent.row < 8 and 0 <= state.agent.col < 8
        inside = obs.window.sum(axis=-1)
        assert set(np.unique(inside)) <= {0.0, 1.0}
        assert reward >= -cfg.burn_penalty * 64
        if reward > 0:
            bonuses += 1
        elif not done:
            assert reward <= 0
    assert state.step <= cfg.max_steps
    assert bonuses <= 1


def test_closed_valve_matches_bare_engine():
    cfg = EnvConfig()
    key = RngKey(17, 0, 3)
    state, _ = E.reset(cfg, key)
    fire = state.fire
    grid = cfg.grid
    for t in range(60):
        if state.done:
            break
        state, *_ = E.step(state, Action(Move.EAST, Valve.CLOSED), cfg)
        fire = step_stochastic(fire, grid, cfg.sim, key.at_step(t))
        assert np.array_equal(state.fire, fire)


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(water=0)
    with pytest.raises(ValueError):
        EnvConfig(burn_penalty=0.0)
    with pytest.raises(ValueError):
        EnvConfig(radius=-1)
    assert EnvConfig().replace(water=5).water == 5


def test_multi_ignition_option():
    state, _ = E.reset(EnvConfig(ignitions=3), RngKey(0))
    assert np.count_nonzero(state.fire == BURNING) == 3
