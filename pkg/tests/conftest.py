import numpy as np
import pytest

from splatpaint.cloud import GaussianCloud
from splatpaint.geometry import CameraView, look_at_camera
from splatpaint.sh import C0


def random_cloud(rng: np.random.Generator, n: int, sh_degree: int = 1,
                 spread: float = 0.5) -> GaussianCloud:
    """Random but well-conditioned cloud near the origin."""
    k = (sh_degree + 1) ** 2
    sh = rng.uniform(-0.2, 0.2, (n, k, 3))
    sh[:, 0, :] = (rng.uniform(0.15, 0.85, (n, 3)) - 0.5) / C0
    quats = rng.standard_normal((n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianCloud(
        means=rng.uniform(-spread, spread, (n, 3)),
        log_scales=rng.uniform(np.log(0.04), np.log(0.2), (n, 3)),
        quats=quats,
        opacities=rng.uniform(-1.0, 2.0, n),
        sh=sh,
    )


def ring_camera(cam_id: int, angle: float, radius: float = 2.5,
                height: float = 1.6, focal: float = 45.0,
                size: int = 32) -> CameraView:
    position = np.array(
        [radius * np.cos(angle), radius * np.sin(angle), height]
    )
    return look_at_camera(
        cam_id, position, np.zeros(3), focal, focal, size, size
    )


def axis_camera(size: int = 16, focal: float = 20.0) -> CameraView:
    """Identity pose at the origin looking down +z."""
    half = (size - 1) / 2.0
    return CameraView(
        cam_id=0, fx=focal, fy=focal, cx=half, cy=half,
        width=size, height=size,
        qvec=np.array([1.0, 0.0, 0.0, 0.0]), tvec=np.zeros(3),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# Generated benchmark scenes are expensive enough to share per session.
# Seeds are fixed so every test run sees the same bytes.

@pytest.fixture(scope="session")
def plane24_dir(tmp_path_factory):
    from splatpaint.fixtures import generate_scene
    out = tmp_path_factory.mktemp("scenes") / "plane24"
    generate_scene("plane24", seed=7, out_dir=out)
    return out


@pytest.fixture(scope="session")
def distractor_dir(tmp_path_factory):
    from splatpaint.fixtures import generate_scene
    out = tmp_path_factory.mktemp("scenes") / "distractor"
    generate_scene("distractor", seed=11, out_dir=out)
    return out


@pytest.fixture(scope="session")
def ring34_dir(tmp_path_factory):
    from splatpaint.fixtures import generate_scene
    out = tmp_path_factory.mktemp("scenes") / "ring34"
    generate_scene("ring34", seed=23, out_dir=out)
    return out
