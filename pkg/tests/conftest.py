import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quadmpc.rigid_body import BodyParams, BodyState, StanceGeometry


@pytest.fixture
def params() -> BodyParams:
    return BodyParams(mass=13.0, inertia=np.diag([0.025, 0.10, 0.11]))


@pytest.fixture
def stance_geom() -> StanceGeometry:
    return StanceGeometry(
        np.array(
            [
                [0.19, 0.13, -0.3],
                [0.19, -0.13, -0.3],
                [-0.19, 0.13, -0.3],
                [-0.19, -0.13, -0.3],
            ]
        )
    )


def random_state(rng, attitude_scale=0.4) -> BodyState:
    return BodyState(
        p=rng.normal(0.0, 1.0, 3),
        theta=rng.uniform(-attitude_scale, attitude_scale, 3),
        v=rng.normal(0.0, 1.0, 3),
        omega=rng.normal(0.0, 1.0, 3),
    )
