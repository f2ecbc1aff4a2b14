from __future__ import annotations

from dataclasses import asdict, dataclass, field

CONDITIONING_MODES = ("reference", "baseline")


@dataclass
class ModelConfig:
    frames: int = 16
    height: int = 96
    width: int = 96
    channels: int = 3
    patch: tuple[int, int, int] = (4, 6, 6)  # (p_t, p_h, p_w)
    dim: int = 64
    depth: int = 2
    heads: int = 2
    mlp_ratio: int = 4
    taps: tuple[int, ...] | None = None  # default {depth // 2, depth - 1}
    predictor_hidden: int | None = None  # default D_total // 4
    lam: float = 0.5
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    conditioning: str = "reference"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.patch = tuple(int(p) for p in self.patch)
        if self.taps is None:
            self.taps = tuple(sorted({self.depth // 2, self.depth - 1}))
        self.taps = tuple(int(t) for t in self.taps)
        self.validate()

    def validate(self) -> None:
        pt, ph, pw = self.patch
        if self.frames % pt or self.height % ph or self.width % pw:
            raise ValueError(
                f"video extents {(self.frames, self.height, self.width)} not divisible by patch {self.patch}"
            )
        if not self.taps or any(not 0 <= t < self.depth for t in self.taps):
            raise ValueError(f"tap layers {self.taps} must lie in [0, {self.depth})")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.timesteps < 1:
            raise ValueError("timesteps must be >= 1")
        if self.conditioning not in CONDITIONING_MODES:
            raise ValueError(f"conditioning must be one of {CONDITIONING_MODES}")

    @property
    def grid(self) -> tuple[int, int, int]:
        pt, ph, pw = self.patch
        return self.frames // pt, self.height // ph, self.width // pw

    @property
    def tokens(self) -> int:
        fp, hp, wp = self.grid
        return fp * hp * wp

    @property
    def cond_channels(self) -> int:
        return 2 * self.channels + 1

    @property
    def d_total(self) -> int:
        return len(self.taps) * self.dim

    @property
    def hidden(self) -> int:
        return self.predictor_hidden or max(1, self.d_total // 4)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patch"] = list(self.patch)
        d["taps"] = list(self.taps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
