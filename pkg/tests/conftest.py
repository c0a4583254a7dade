import numpy as np
import pytest

from absim.channel import FadingMode, GbsSpec, PropagationParams
from absim.environment import ScenarioConfig
from absim.geometry import AreaSpec, GridState


def make_area(m=4, width=100.0, altitude=100.0):
    return AreaSpec(0.0, m * width, 0.0, m * width, m, altitude)


def make_scenario(m=4, n_agents=1, n_subchannels=2, beta1=0.0, beta2=0.25,
                  beta3=0.0, fading=FadingMode.NONE, users=None, assoc=None,
                  initial=None, final=None, noise=1e-9, d_min=5.0, p_max=0.2,
                  gbs=None):
    """Small scenario with sane defaults for unit tests."""
    area = make_area(m)
    if initial is None:
        initial = [GridState(1, 1), GridState(m, 1)][:n_agents]
    if final is None:
        final = [GridState(m, m), GridState(1, m)][:n_agents]
    if users is None:
        # one user per agent, placed asymmetrically inside the area
        users = np.array([[area.x_max * 0.3 * (j + 1), area.y_max * 0.4]
                          for j in range(n_agents)])
    users = np.asarray(users, dtype=float)
    if assoc is None:
        assoc = np.array([min(i, n_agents - 1) for i in range(users.shape[0])])
    prop = PropagationParams(noise_power=noise)
    return ScenarioConfig(
        area=area,
        initial_states=tuple(initial),
        final_states=tuple(final),
        users_xy=users,
        association=np.asarray(assoc),
        n_subchannels=n_subchannels,
        p_max=p_max,
        d_min=d_min,
        beta1=beta1,
        beta2=beta2,
        beta3=beta3,
        propagation=prop,
        fading=fading,
        gbs=gbs if gbs is not None else GbsSpec(),
    )


@pytest.fixture
def area4():
    return make_area(4)
