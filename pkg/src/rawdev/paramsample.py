"""Seeded sampling of per-image development recipes.

Every image gets its own Philox-4x64 counter-based stream whose key is the
BLAKE2b digest of ``(master_seed, image_id)``. Streams are therefore
independent of call order and worker assignment, and every recipe field is
drawn in a fixed order whether or not the stage ends up enabled.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

DEMOSAIC_PROBS = {"Fast": 0.35, "DCB": 0.65}
KERNEL_PROBS = {"Nearest": 0.2, "Bicubic": 0.5, "Bilinear": 0.3}

DENOISE_SHAPE, DENOISE_SCALE, DENOISE_RANGE = 4.0, 10.0, (0.0, 60.0)
DETAIL_MAX = 40
MC_PROBABILITY = 0.5
MC_SHAPE, MC_SCALE, MC_RANGE = 1.0, 50.0, (0.0, 100.0)
MC_UNIFORMITY_MU, MC_UNIFORMITY_SIGMA = 30.0, 5.0
USM_PROBABILITY = 0.5
USM_AMOUNT_RANGE = (0.2, 2.0)
TARGET_SIDE = 1024
QUALITY_FACTOR = 75


class Demosaic(str, enum.Enum):
    FAST = "Fast"
    DCB = "DCB"


class ResizeKernel(str, enum.Enum):
    NEAREST = "Nearest"
    BILINEAR = "Bilinear"
    BICUBIC = "Bicubic"


class Profile(str, enum.Enum):
    LEARNING = "learning"
    TEST = "test"


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    image_id: str


@dataclass(frozen=True)
class DevRecipe:
    demosaic: Demosaic
    resize_kernel: ResizeKernel
    target_side: int = TARGET_SIDE
    usm_enabled: bool = False
    usm_amount: float | None = None
    denoise_intensity: float | None = None
    denoise_detail: int | None = None
    microcontrast_enabled: bool = False
    mc_strength: float | None = None
    mc_uniformity: int | None = None
    quality_factor: int = QUALITY_FACTOR

    def __post_init__(self):
        object.__setattr__(self, "demosaic", Demosaic(self.demosaic))
        object.__setattr__(self, "resize_kernel", ResizeKernel(self.resize_kernel))
        self.validate()

    def validate(self) -> None:
        if self.target_side < 8 or self.target_side % 8:
            raise ValueError("target_side must be a positive multiple of 8")
        if not 1 <= self.quality_factor <= 100:
            raise ValueError("quality_factor must be in [1, 100]")
        if self.usm_enabled:
            if self.usm_amount is None or self.usm_amount < 0:
                raise ValueError("usm_amount must be >= 0 when USM is enabled")
        else:
            if self.usm_amount is not None:
                raise ValueError("usm_amount is only present when USM is enabled")
            if self.denoise_intensity is None or self.denoise_detail is None:
                raise ValueError("denoise fields are required when USM is off")
        if self.denoise_intensity is not None and not 0 <= self.denoise_intensity <= 60:
            raise ValueError("denoise_intensity outside [0, 60]")
        if self.denoise_detail is not None and not 0 <= self.denoise_detail <= DETAIL_MAX:
            raise ValueError("denoise_detail outside [0, 40]")
        if self.microcontrast_enabled:
            if self.mc_strength is None or not 0 <= self.mc_strength <= 100:
                raise ValueError("mc_strength outside [0, 100]")
            if self.mc_uniformity is None or self.mc_uniformity < 0:
                raise ValueError("mc_uniformity must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["demosaic"] = self.demosaic.value
        d["resize_kernel"] = self.resize_kernel.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> DevRecipe:
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> DevRecipe:
        return cls.from_dict(json.loads(text))


def stream_key(seed: SeedSpec) -> np.ndarray:
    """128-bit Philox key for one image."""
    h = hashlib.blake2b(digest_size=16, person=b"rawdev-recipe")
    h.update(int(seed.master_seed).to_bytes(8, "little", signed=seed.master_seed < 0))
    h.update(seed.image_id.encode("utf-8"))
    return np.frombuffer(h.digest(), dtype="<u8").copy()


def image_rng(seed: SeedSpec) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed)))


def sample_gamma_scaled(a, scale, lo, hi, rng: np.random.Generator, size=None):
    """Draw Gamma(a, 1), multiply by `scale` and clamp to [lo, hi]."""
    if not (a > 0 and scale > 0 and lo < hi):
        raise ValueError(f"invalid gamma parameters a={a}, scale={scale}, range=[{lo}, {hi}]")
    x = scale * rng.standard_gamma(a, size=size)
    return np.clip(x, lo, hi) if size is not None else float(min(max(x, lo), hi))


def sample_floor_normal(mu, sigma, lo, rng: np.random.Generator, size=None):
    """max(lo, floor(X)) with X ~ Normal(mu, sigma)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.floor(rng.normal(mu, sigma, size=size))
    if size is None:
        return int(max(lo, x))
    return np.maximum(lo, x).astype(np.int64)


def _categorical(u: float, probs: dict):
    acc = 0.0
    for name, p in probs.items():
        acc += p
        if u < acc:
            return name
    return name


def sample_recipe(seed: SeedSpec, profile=Profile.LEARNING,
                  usm_probability: float = USM_PROBABILITY) -> DevRecipe:
    """Sample the full development recipe for one image."""
    profile = Profile(profile)
    rng = image_rng(seed)
    u_demosaic = rng.random()
    u_kernel = rng.random()
    u_usm = rng.random()
    usm_amount = rng.uniform(*USM_AMOUNT_RANGE)
    intensity = sample_gamma_scaled(DENOISE_SHAPE, DENOISE_SCALE, *DENOISE_RANGE, rng)
    detail = int(rng.integers(0, DETAIL_MAX + 1))
    u_mc = rng.random()
    strength = sample_gamma_scaled(MC_SHAPE, MC_SCALE, *MC_RANGE, rng)
    uniformity = sample_floor_normal(MC_UNIFORMITY_MU, MC_UNIFORMITY_SIGMA, 0, rng)

    usm = profile is Profile.TEST and u_usm < usm_probability
    mc = u_mc < MC_PROBABILITY
    return DevRecipe(
        demosaic=_categorical(u_demosaic, DEMOSAIC_PROBS),
        resize_kernel=_categorical(u_kernel, KERNEL_PROBS),
        usm_enabled=usm,
        usm_amount=float(usm_amount) if usm else None,
        denoise_intensity=None if usm else float(intensity),
        denoise_detail=None if usm else detail,
        microcontrast_enabled=mc,
        mc_strength=float(strength) if mc else None,
        mc_uniformity=uniformity if mc else None,
    )


def gamma_pdf_scaled(x, a, scale):
    """Density of scale * Gamma(a, 1) at x (for reference plots and tests)."""
    x = np.asarray(x, dtype=np.float64) / scale
    return np.where(x > 0, x ** (a - 1) * np.exp(-x) / math.gamma(a) / scale, 0.0)


def keyed_rng(domain: bytes, *parts) -> np.random.Generator:
    """Philox stream keyed by a BLAKE2b digest of `parts` under `domain`.

    Used for the seeded shuffles and embedding positions outside recipe
    sampling, so those never share a stream with a recipe.
    """
    h = hashlib.blake2b(digest_size=16, person=domain[:16])
    for p in parts:
        b = str(p).encode("utf-8")
        h.update(len(b).to_bytes(4, "little"))
        h.update(b)
    return np.random.Generator(np.random.Philox(key=np.frombuffer(h.digest(), dtype="<u8").copy()))
