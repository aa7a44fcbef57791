import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# narrow widths keep model-level tests fast; structure matches the defaults
SMALL_DIMS = {"googlenet": 6, "places365": 5, "affect_arousal": 3, "affect_valence": 3}


@pytest.fixture
def small_spec():
    from avhighlight.model import ModelSpec

    return ModelSpec(dims=SMALL_DIMS, embed_dim=4, cam_filters=3, cam_map=(14, 14), mfcc_filters=(3, 4),
                     lstm_units=3, head_units=3, frames_per_segment=10)


def random_batch(spec, batch, seed=0):
    rng = np.random.default_rng(seed)
    feeds = {}
    for m in spec.modalities:
        x = rng.standard_normal((batch,) + spec.input_shape(m))
        feeds[m] = np.abs(x) if m == "faces" else x
    return feeds


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    """A written synthetic dataset small enough for CLI and IO tests."""
    from avhighlight.data import SynthConfig, write_synthetic

    root = tmp_path_factory.mktemp("tiny")
    cfg = SynthConfig(n_videos=6, seed=5, n_raters=3, dims={"googlenet": 8, "places365": 6, "affect_arousal": 4,
                                                            "affect_valence": 4})
    write_synthetic(root, cfg)
    return root


def jittered_params(spec, seed=0, scale=0.1):
    """Initial parameters with every entry nudged off zero.

    Zero biases put ReLU inputs exactly on the kink whenever an upstream
    layer is fully inactive, which breaks finite differences.
    """
    from avhighlight.model import init_params

    params = init_params(spec, seed)
    rng = np.random.default_rng(seed + 1)
    for p in params.params.values():
        p += scale * rng.standard_normal(p.shape)
    return params


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records one PASS/FAIL line, then asserts.

    A test named ``test_criterion_NN_...`` that errors before reporting is
    recorded as a failure too.
    """
    start = time.perf_counter()
    number = int(request.node.name.split("_")[2])

    def check(n, ok, detail=""):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - start:.1f} s)"
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    yield check
    if number not in ACCEPTANCE:
        ACCEPTANCE[number] = f"criterion {number:2d}: FAIL  raised before reporting  ({time.perf_counter() - start:.1f} s)"
