import numpy as np
import pytest

from diffshift.schedule import NoiseSchedule, build_schedule


@pytest.fixture(scope="session")
def schedule():
    """Default linear schedule shared across tests (read-only)."""
    return build_schedule()


def schedule_from_alpha_bars(alpha_bars) -> NoiseSchedule:
    """Build a schedule with prescribed ladder values, for hand-value tests."""
    ab = np.asarray(alpha_bars, dtype=np.float64)
    alphas = np.empty_like(ab)
    alphas[0] = ab[0]
    alphas[1:] = ab[1:] / ab[:-1]

    def frozen(a):
        a = np.ascontiguousarray(a, dtype=np.float64)
        a.setflags(write=False)
        return a

    return NoiseSchedule(betas=frozen(1.0 - alphas), alphas=frozen(alphas),
                         alpha_bars=frozen(ab), variances=frozen(1.0 - ab))
