"""Runtime configuration with the published parameter defaults."""

import math
from dataclasses import dataclass, field, asdict


@dataclass
class HallucinationConfig:
    patch_size: int = 32          # z
    lam: float = 5.0              # gradient weight in the patch distance
    alpha_coh: float = 0.0005
    alpha_con: float = 0.05
    search_radius: int = 10       # random search confined to a 21x21 box
    m: int = 8                    # max number of sample images
    pm_iters: int = 5             # PatchMatch passes per search() call
    coherence_window: int = 33
    scale_min: float = 0.9
    scale_max: float = 1.1
    theta_max: float = math.pi / 4
    allow_reflect: bool = True
    color_adjust: bool = True
    gain_min: float = 1.0
    gain_max: float = 1.3
    bias_max: float = 20.0
    sigma_floor: float = 5.0      # source std below this -> bias only
    alpha_decay: float = 0.8      # injection weight decay per scale
    poisson_lambda: float = 5.0   # gradient weight in the screened Poisson solve
    poisson_tol: float = 1e-4     # inf-norm residual on the normal equations
    poisson_maxiter: int = 20000
    seed: int = 0
    workers: int = 0              # 0 -> use hardware parallelism
    dump_intermediate: str = ""   # directory for per-scale dumps, "" = off
    dump_nnf: str = ""            # directory for binary NNF dumps, "" = off
    log_csv: str = ""             # diagnostics CSV path, "" = off

    def __post_init__(self):
        if self.patch_size < 2 or self.patch_size % 2 != 0:
            raise ValueError("patch_size must be even and >= 2")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        for name in ("lam", "alpha_coh", "alpha_con", "pm_iters",
                     "alpha_decay", "poisson_lambda"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def translation_only(self):
        return (self.scale_min == self.scale_max == 1.0
                and self.theta_max == 0.0 and not self.allow_reflect)

    def as_dict(self):
        return asdict(self)


def translation_only_config(**overrides):
    """Config restricted to integer translations (used by search oracles)."""
    base = dict(scale_min=1.0, scale_max=1.0, theta_max=0.0,
                allow_reflect=False, color_adjust=False)
    base.update(overrides)
    return HallucinationConfig(**base)
