"""Shared scene builders for the test suite."""

import numpy as np

from polgnlm.core import HermitianCov3
from polgnlm.simulate import ClassSpec, Region, SceneSpec, generate_scene


LIVE = HermitianCov3(1.0, 0.35, 1.0, 0j, 0.15 + 0j, 0j)
DEAD = HermitianCov3(1.1, 0.2, 1.0, 0j, -0.45 + 0j, 0j)


def two_class_spec(height=32, width=32, seed=0, noise=0.03):
    half = width // 2
    return SceneSpec(
        height, width,
        [Region(0, 0, height, half, 0), Region(0, half, height, width - half, 1)],
        {0: ClassSpec(0, LIVE, (0.04, 0.07, 0.03, 0.35), "live"),
         1: ClassSpec(1, DEAD, (0.08, 0.09, 0.06, 0.22), "dead")},
        optical_noise_sigma=noise, seed=seed,
    )


def random_scene(seed, height=24, width=24):
    return generate_scene(two_class_spec(height, width, seed))
