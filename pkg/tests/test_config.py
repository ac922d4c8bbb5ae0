"""
Tests for configuration management.
"""

import pytest

from vascular_mrc.core.config import ConfigManager, RunConfig, config_keys
from vascular_mrc.utils.exceptions import ConfigurationError


class TestConfigManager:
    """Test cases for ConfigManager."""

    def test_defaults(self, make_manager):
        """Test that every key has a default and the documented values load."""
        manager = make_manager()
        assert manager.config.rho_th == 0.9
        assert manager.config.gof is True
        assert manager.config.lk_window == 21
        assert manager.config.regressor == "mrc"
        assert manager.config.gpr_vbar_th is None

    def test_every_key_is_documented(self):
        """Test that each configuration key carries a description."""
        for key, info in RunConfig.model_fields.items():
            assert info.description, key
        assert config_keys()[0] == "sequence_dir"

    def test_file_values(self, make_manager, tmp_path):
        """Test loading values from a key=value file."""
        config_file = tmp_path / "run.cfg"
        config_file.write_text("rho_th=0.8\nMAX_CORNERS=50\n# comment\ngof=off\n", encoding="utf-8")
        manager = make_manager(config_file)
        assert manager.config.rho_th == 0.8
        assert manager.config.max_corners == 50
        assert manager.config.gof is False

    def test_overrides_win_over_file(self, make_manager, tmp_path):
        """Test that flags take precedence over the config file."""
        config_file = tmp_path / "run.cfg"
        config_file.write_text("rho_th=0.8\n", encoding="utf-8")
        manager = make_manager(config_file, rho_th="0.7", max_corners=None)
        assert manager.config.rho_th == 0.7
        assert manager.config.max_corners == 200

    def test_environment_variables(self, clean_env, monkeypatch):
        """Test that MRC_* environment variables are read."""
        monkeypatch.setenv("MRC_DENSE_STRIDE", "4")
        assert ConfigManager().config.dense_stride == 4

    def test_unknown_key(self, make_manager, tmp_path):
        """Test that unknown keys are rejected with troubleshooting tips."""
        config_file = tmp_path / "run.cfg"
        config_file.write_text("rho_threshold=0.8\n", encoding="utf-8")
        with pytest.raises(ConfigurationError) as exc_info:
            make_manager(config_file)
        assert "Unknown configuration key: rho_threshold" in str(exc_info.value)
        assert "Troubleshooting tips" in str(exc_info.value)
        assert exc_info.value.exit_code == 2

    def test_invalid_values_are_collected(self, make_manager):
        """Test that several invalid values are reported together."""
        with pytest.raises(ConfigurationError) as exc_info:
            make_manager(rho_th=1.5, warp_k=0)
        message = str(exc_info.value)
        assert "rho_th" in message
        assert "warp_k" in message

    def test_even_window(self, make_manager):
        """Test that an even LK window is rejected."""
        with pytest.raises(ConfigurationError) as exc_info:
            make_manager(lk_window=20)
        assert "lk_window must be odd" in str(exc_info.value)

    def test_corner_margin_covers_window(self, make_manager):
        """Test that corners must keep half a window from the border."""
        with pytest.raises(ConfigurationError) as exc_info:
            make_manager(lk_window=21, corner_margin=5)
        assert "corner_margin" in str(exc_info.value)

    def test_missing_config_file(self, make_manager, tmp_path):
        """Test error handling for a missing config file."""
        with pytest.raises(ConfigurationError) as exc_info:
            make_manager(tmp_path / "absent.cfg")
        assert "Config file not found" in str(exc_info.value)

    def test_stage_parameters(self, make_manager):
        """Test the typed parameter models derived from the run config."""
        manager = make_manager(corner_margin=12, lk_window=15, warp_k=6, gpr_kernel="squared")
        assert manager.corner_params().margin == 12
        assert manager.lk_params().window == 15
        assert manager.lk_params().half_window == 7
        assert manager.warp_params().k == 6
        assert manager.gpr_params().kernel == "squared"
        assert manager.phantom_config().width == manager.config.width

    def test_with_overrides(self, make_manager):
        """Test that with_overrides layers new values over existing ones."""
        manager = make_manager(rho_th=0.8)
        derived = manager.with_overrides(flow_mode="dense")
        assert derived.config.rho_th == 0.8
        assert derived.config.flow_mode == "dense"
        assert manager.config.flow_mode == "sparse"

    def test_to_dict(self, make_manager):
        """Test the JSON-friendly dump."""
        data = make_manager().to_dict()
        assert data["output_dir"] == "output"
        assert set(data) == set(config_keys())
