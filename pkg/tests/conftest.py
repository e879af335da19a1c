import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from goalienet.annotations import FrameAnnotation, Keypoint2D
from goalienet.schema import NUM_KEYPOINTS

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_frame(points, width=320, height=240, frame_id="f0", image_path="images/f0.ppm"):
    """Frame from ``{id: (x, y)}``; ids not listed are absent."""
    kps = tuple(Keypoint2D(*points[i], True) if i in points else Keypoint2D()
                for i in range(1, NUM_KEYPOINTS + 1))
    return FrameAnnotation(frame_id, image_path, width, height, kps)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Eight rendered frames on disk."""
    from goalienet.synth import SceneParams, generate_dataset

    out = tmp_path_factory.mktemp("tiny")
    return generate_dataset(SceneParams(seed=5), 8, out)


CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
