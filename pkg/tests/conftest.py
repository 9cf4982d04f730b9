import numpy as np
import pytest

from qvortex import experiments as ex
from qvortex.config import build_config
from qvortex.vortex import from_xy

LEAPFROG_XY = [(0.0, 1.0), (0.0, 0.3), (0.0, -1.0), (0.0, -0.3)]
LEAPFROG_G = [1.0, 1.0, -1.0, -1.0]
LEAPFROG_C0 = -1.7903

_ACCEPTANCE: list[str] = []


def record_acceptance(line: str) -> None:
    print(line)
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def leapfrog_system():
    return from_xy(LEAPFROG_XY, LEAPFROG_G)


@pytest.fixture(scope="session")
def leapfrog_pipeline():
    """Truth to t = 18, encoding, fitted generator and the 64-step noiseless run."""
    cfg = build_config("leapfrog", {"t_end": 18.0})
    truth = ex.ground_truth(cfg)
    enc = ex.encode_truth(cfg, truth)
    training = ex.training_set(cfg, enc)
    model = ex.fit_model(cfg, enc, training)
    psi, frame = ex.start_frame(cfg, enc)
    c_const = ex.drift_constant(cfg, enc)
    plan = ex.make_plan(cfg, model, psi)
    blocks, weights = ex.noiseless_blocks(plan)
    return dict(cfg=cfg, truth=truth, enc=enc, training=training, model=model, psi=psi,
                frame=frame, c_const=c_const, plan=plan, blocks=blocks, weights=weights)
