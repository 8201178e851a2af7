import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from hallucinate.config import HallucinationConfig


def synth_photo(height, width, seed=0):
    """Synthetic photo-like fixture: multi-band filtered noise, so there is
    structure at every spatial frequency (plain noise has no coherent
    patches and a constant image has no detail to recover)."""
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width, 3))
    for sig, amp in ((32.0, 8.0), (8.0, 4.0), (2.0, 2.0), (0.5, 1.0)):
        img += gaussian_filter(rng.uniform(-1.0, 1.0, img.shape),
                               (sig, sig, 0), mode="wrap") * amp * sig
    img -= img.min()
    return img / img.max() * 255.0


@pytest.fixture
def photo():
    return synth_photo(96, 128, seed=3)


@pytest.fixture
def small_cfg():
    """Configuration scaled down for fast unit tests."""
    return HallucinationConfig(patch_size=8, coherence_window=9, seed=0)
