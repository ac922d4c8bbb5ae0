"""
Configuration management for the vascular_mrc package.

Run settings are read from an optional key=value file, ``MRC_*`` environment
variables and command-line overrides, validated in one pass, and exposed as
typed parameter models for each pipeline stage.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from dotenv import dotenv_values
from pydantic import Field, model_validator
from pydantic import ValidationError as PydanticValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..utils.exceptions import ConfigurationError
from .models import CornerParams, GprParams, LkParams, PhantomConfig, WarpParams

logger = logging.getLogger(__name__)


class RunConfig(BaseSettings):
    """Every tunable of a run. Unknown keys are rejected."""

    model_config = SettingsConfigDict(env_prefix="MRC_", extra="forbid", frozen=True)

    # Paths
    sequence_dir: Optional[Path] = Field(None, description="Directory holding frames and manifest.txt")
    model_file: Optional[Path] = Field(None, description="Model file written by train / read by predict")
    output_dir: Path = Field(Path("output"), description="Directory for masks, overlays and CSVs")
    seed: int = Field(0, description="Seed for the phantom and flow corruption")
    threads: int = Field(1, ge=1, description="Worker threads for tracking and GP fits")
    warmup: bool = Field(True, description="Run one untimed warm-up before the timed learn and predict stages")

    # Corner detection
    max_corners: int = Field(200, ge=1, description="Maximum corners per set (vascular, non-vascular)")
    quality_level: float = Field(0.05, gt=0.0, lt=1.0, description="Response threshold as a fraction of the maximum")
    min_distance: float = Field(8.0, ge=1.0, description="Minimum spacing between corners of a set (px)")
    block_size: int = Field(5, description="Structure tensor block size (odd, >= 3)")
    mask_dilation: float = Field(3.0, ge=0.0, description="Vessel mask dilation for corner classification (px)")
    corner_margin: int = Field(20, ge=0, description="Corners closer than this to the border are discarded (px)")

    # Lucas-Kanade
    lk_window: int = Field(21, description="LK window size (odd, >= 5)")
    lk_levels: int = Field(3, ge=1, description="Pyramid levels")
    lk_iters: int = Field(30, ge=1, description="Maximum LK iterations per level")
    lk_eps: float = Field(0.01, gt=0.0, description="LK convergence step norm (px)")
    lk_min_eig: float = Field(1e-6, ge=0.0, description="Minimum per-pixel structure tensor eigenvalue")

    # Model
    regressor: Literal["mrc", "gpr"] = Field("mrc", description="Regressor: mrc or gpr")
    rho_th: float = Field(0.9, gt=0.0, le=1.0, description="Pearson threshold for pair selection")
    gof: bool = Field(True, description="Gaussian outlier filtering on/off")
    flow_mode: Literal["sparse", "dense"] = Field("sparse", description="Corner flows (sparse) or grid flows (dense)")
    dense_stride: int = Field(8, ge=1, description="Grid stride in dense mode (px)")

    # Warp
    warp_k: int = Field(4, ge=1, description="Nearest anchors used by IDW interpolation")
    warp_power: float = Field(2.0, gt=0.0, description="IDW distance power")

    # GPR
    gpr_sigma_n: float = Field(0.01, ge=0.0, description="GP noise standard deviation (px)")
    gpr_kernel: Literal["paper", "squared"] = Field("paper", description="Kernel exponent: |d| (paper) or d^2 (squared)")
    gpr_vbar_th: Optional[float] = Field(None, ge=0.0, description="Combined variance threshold; unset = automatic")

    # Phantom
    width: int = Field(256, ge=16, description="Phantom width (px)")
    height: int = Field(256, ge=16, description="Phantom height (px)")
    amplitude_px: float = Field(8.0, ge=0.0, description="Breathing amplitude (px)")
    period_frames: float = Field(16.0, gt=0.0, description="Breathing period (frames)")
    gamma: float = Field(0.5, ge=0.0, le=1.0, description="Motion scale at the top row relative to the bottom")
    phase: float = Field(0.5, description="Phase lag of vertical motion (rad)")
    contrasted_frames: int = Field(12, ge=1, description="Contrasted (training) frames")
    live_frames: int = Field(20, ge=0, description="Live (prediction) frames")
    vessel_contrast: float = Field(0.35, ge=0.0, le=1.0, description="Vessel darkening in contrasted frames")
    texture_sigma: float = Field(2.5, gt=0.0, description="Background texture smoothing (px)")
    noise_sigma: float = Field(0.0, ge=0.0, description="Additive Gaussian noise per frame")
    pixel_spacing_mm: float = Field(0.5, gt=0.0, description="Pixel spacing (mm/px)")
    vessel_seed: Optional[int] = Field(None, description="Seed for the vessel tree; unset = derived from seed")
    texture_seed: Optional[int] = Field(None, description="Seed for the background; unset = derived from seed")

    # Robustness studies
    corrupt_fraction: float = Field(0.0, ge=0.0, le=1.0, description="Fraction of live non-vascular flows corrupted")
    corrupt_px: float = Field(20.0, ge=0.0, description="Corruption offset per axis (px)")

    @model_validator(mode="after")
    def _check_cross_fields(self) -> "RunConfig":
        problems: List[str] = []
        if self.lk_window < 5 or self.lk_window % 2 != 1:
            problems.append(f"lk_window must be odd and >= 5, got {self.lk_window}")
        if self.block_size < 3 or self.block_size % 2 != 1:
            problems.append(f"block_size must be odd and >= 3, got {self.block_size}")
        if self.corner_margin < self.lk_window // 2:
            problems.append(
                f"corner_margin ({self.corner_margin}) must be at least lk_window // 2 ({self.lk_window // 2})"
            )
        if problems:
            raise ValueError("; ".join(problems))
        return self


def config_keys() -> List[str]:
    """All configuration keys in declaration order."""
    return list(RunConfig.model_fields.keys())


class ConfigManager:
    """Loads, merges and validates run configuration."""

    def __init__(
        self,
        config_file: Optional[Union[str, Path]] = None,
        overrides: Optional[Dict[str, Any]] = None,
    ):
        """Initialize ConfigManager and load configuration.

        Args:
            config_file: Optional key=value file; its keys are RunConfig field names
            overrides: Values that win over the file (typically command-line flags);
                ``None`` values are ignored
        """
        self.config: Optional[RunConfig] = None
        self.config_file = Path(config_file) if config_file else None
        self.overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
        self.load_configuration()

    def load_file(self) -> Dict[str, str]:
        """Read the key=value file, skipping empty values."""
        if self.config_file is None:
            return {}
        if not self.config_file.is_file():
            raise ConfigurationError(f"Config file not found: {self.config_file}", config_field="config_file")
        values = dotenv_values(self.config_file)
        return {key.strip().lower(): value for key, value in values.items() if value not in (None, "")}

    def load_configuration(self) -> None:
        """Merge file values and overrides over the environment and validate."""
        merged: Dict[str, Any] = dict(self.load_file())
        merged.update(self.overrides)
        try:
            self.config = RunConfig(**merged)
        except PydanticValidationError as e:
            raise self._configuration_error(e)
        logger.debug(f"Loaded configuration: {self.to_dict()}")

    def _configuration_error(self, error: PydanticValidationError) -> ConfigurationError:
        """Collect every validation failure into one ConfigurationError."""
        messages = []
        fields = []
        for item in error.errors():
            key = ".".join(str(part) for part in item["loc"]) or "config"
            fields.append(key)
            if item["type"] == "extra_forbidden":
                messages.append(f"Unknown configuration key: {key}")
            else:
                messages.append(f"Invalid value for {key}: {item['msg']}")

        error_message = ". ".join(messages)
        error_message += ".\n\nTroubleshooting tips:\n"
        error_message += "- Run 'vascular-mrc --help' to list every configuration key\n"
        error_message += "- Config files use one key=value per line with lowercase keys\n"
        error_message += "- Environment variables use the MRC_ prefix (e.g. MRC_RHO_TH=0.9)\n"
        error_message += "- lk_window and block_size must be odd; corner_margin >= lk_window // 2"
        return ConfigurationError(error_message, config_field=", ".join(fields))

    def _require(self) -> RunConfig:
        if not self.config:
            raise ConfigurationError("Configuration not loaded")
        return self.config

    def corner_params(self) -> CornerParams:
        c = self._require()
        return CornerParams(
            max_corners=c.max_corners,
            quality_level=c.quality_level,
            min_distance=c.min_distance,
            block_size=c.block_size,
            mask_dilation=c.mask_dilation,
            margin=c.corner_margin,
        )

    def lk_params(self) -> LkParams:
        c = self._require()
        return LkParams(
            window=c.lk_window,
            pyramid_levels=c.lk_levels,
            max_iterations=c.lk_iters,
            epsilon=c.lk_eps,
            min_eig_threshold=c.lk_min_eig,
        )

    def warp_params(self) -> WarpParams:
        c = self._require()
        return WarpParams(k=c.warp_k, power=c.warp_power)

    def gpr_params(self) -> GprParams:
        c = self._require()
        return GprParams(sigma_n=c.gpr_sigma_n, kernel=c.gpr_kernel, vbar_th=c.gpr_vbar_th)

    def phantom_config(self) -> PhantomConfig:
        c = self._require()
        return PhantomConfig(
            width=c.width,
            height=c.height,
            amplitude_px=c.amplitude_px,
            period_frames=c.period_frames,
            gamma=c.gamma,
            phase=c.phase,
            contrasted_frames=c.contrasted_frames,
            live_frames=c.live_frames,
            seed=c.seed,
            vessel_seed=c.vessel_seed,
            texture_seed=c.texture_seed,
            vessel_contrast=c.vessel_contrast,
            texture_sigma=c.texture_sigma,
            noise_sigma=c.noise_sigma,
            pixel_spacing_mm=c.pixel_spacing_mm,
        )

    def with_overrides(self, **overrides: Any) -> "ConfigManager":
        """A new manager with extra overrides applied on top of this one."""
        merged = dict(self.overrides)
        merged.update(overrides)
        return ConfigManager(self.config_file, merged)

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to a JSON-friendly dictionary."""
        if not self.config:
            return {}
        return self.config.model_dump(mode="json")
