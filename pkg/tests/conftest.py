import os

import pytest
from hypothesis import settings

from adhoc_arena.config import Scenario
from adhoc_arena.engine import Simulator
from adhoc_arena.mobility import Mover
from adhoc_arena.traffic import SessionSpec

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def scripted_sim(positions, sessions=(), velocities=None, **overrides):
    """A simulator over hand-placed nodes on straight-line trajectories."""
    kw = dict(n_nodes=len(positions), n_sessions=len(sessions), horizon_s=20.0)
    kw.update(overrides)
    scenario = Scenario(**kw)
    specs = [s if isinstance(s, SessionSpec) else SessionSpec(k, *s) for k, s in enumerate(sessions)]
    return Simulator(scenario, sessions=specs, mover=Mover.linear(positions, velocities), record_routes=True)


@pytest.fixture
def make_sim():
    return scripted_sim
