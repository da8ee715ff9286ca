import dataclasses

import numpy as np
import pytest

from trajplan.config import RunConfig
from trajplan.geometry import Polygon, Pose2
from trajplan.vehicle import VehicleParams
from trajplan.world import PlanningTask, TaskMap


@pytest.fixture(scope="session")
def vehicle():
    return VehicleParams()


@pytest.fixture(scope="session")
def open_map():
    return TaskMap((0.0, 0.0, 40.0, 40.0), [], map_id="open").validate()


@pytest.fixture(scope="session")
def simple_map():
    return TaskMap((0.0, 0.0, 40.0, 40.0), [
        Polygon(np.array([[10.0, 10.0], [16.0, 10.0], [16.0, 14.0], [10.0, 14.0]])),
        Polygon(np.array([[22.0, 20.0], [26.0, 18.0], [28.0, 22.0], [25.0, 25.0], [21.0, 23.0]])),
        Polygon(np.array([[8.0, 25.0], [12.0, 25.0], [12.0, 30.0], [8.0, 30.0]])),
    ], map_id="simple").validate()


@pytest.fixture(scope="session")
def simple_task():
    return PlanningTask(Pose2(4.0, 4.0, 0.3), Pose2(28.0, 8.0, 0.0))


@pytest.fixture(scope="session")
def small_cfg():
    """Desk config with a short horizon so OCP solves stay fast in unit tests."""
    cfg = RunConfig()
    return dataclasses.replace(
        cfg,
        ocp=dataclasses.replace(cfg.ocp, n_nodes=60, t_final=23.6),
        astar=dataclasses.replace(cfg.astar, node_budget=60_000),
    )
