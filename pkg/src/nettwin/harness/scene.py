"""Glue between world state and rendered observations."""

from __future__ import annotations

import numpy as np

from ..ppo import quantize
from ..render import agent_camera, render_display_texture, render_observation
from ..world import WALL_X0, Pose, ViewpointRange, stimulus_azimuth
from .config import RunConfig


class Scene:
    def __init__(self, config: RunConfig):
        self.config = config

    def texture(self, object_id: str | None, vrange: ViewpointRange | None, t: int) -> np.ndarray:
        if object_id is None:
            return render_display_texture("blank")
        az = stimulus_azimuth(t, vrange, self.config.stimulus_period_steps, self.config.waveform)
        return render_display_texture(object_id, az, vrange.elevation)

    def observe(self, pose: Pose, wall_x0: np.ndarray, wall_xl: np.ndarray) -> np.ndarray:
        cfg = self.config
        cam = agent_camera(pose, cfg.body, cfg.camera.fov, cfg.camera.near)
        return quantize(render_observation(cfg.chamber, wall_x0, wall_xl, cam))

    def displays(self, wall: str, shown: np.ndarray, other: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Order (shown, other) textures as (x0 wall, xL wall) given the wall of ``shown``."""
        return (shown, other) if wall == WALL_X0 else (other, shown)
