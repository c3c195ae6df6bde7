"""
Configuration management for topo-match
"""
import os
import json
import logging
from pathlib import Path
from typing import Dict, Any, Optional

logger = logging.getLogger(__name__)

CONNECTIVITY_CHOICES = ("four", "eight")


class Config:
    """Configuration handler for topological matching runs"""

    def __init__(self, config_file: Optional[str] = None):
        self.base_dir = Path(__file__).parent.parent
        self.config_dir = self.base_dir / "config"
        self.logs_dir = self.base_dir / "logs"

        # Default configuration
        self._config = {
            "matching": {
                "tau_primary": 0.1,
                "connectivity": "eight"
            },
            "global": {
                "min_support": None,
                "facets": 4
            },
            "loss": {
                "lambda_cons": 0.1,
                "lambda_intra": 0.001,
                "lambda_temp": 0.001,
                "ramp_k": 0.1,
                "ema_alpha": 0.999,
                "dice_weight": 0.5,
                "ce_weight": 0.5
            },
            "metrics": {
                "window": 256,
                "stride": None,
                "threshold": 0.5
            },
            "synth": {
                "cutoff": None
            },
            "runtime": {
                "threads": self._threads_from_env()
            },
            "logging": {
                "level": os.getenv("TOPO_MATCH_LOG_LEVEL", "WARNING"),
                "file": None
            },
            "reports": {
                "dir": str(self.logs_dir)
            }
        }

        # Load configuration from file if it exists
        self._load_config(config_file or os.getenv("TOPO_MATCH_CONFIG"))

    @staticmethod
    def _threads_from_env() -> Optional[int]:
        """Read the TOPO_MATCH_THREADS cap, ignoring unusable values"""
        raw = os.getenv("TOPO_MATCH_THREADS")
        if raw is None or raw.strip() == "":
            return None
        try:
            threads = int(raw)
        except ValueError:
            logger.warning(f"Ignoring TOPO_MATCH_THREADS={raw!r}: not an integer")
            return None
        if threads < 1:
            logger.warning(f"Ignoring TOPO_MATCH_THREADS={threads}: must be positive")
            return None
        return threads

    def _load_config(self, config_file: Optional[str]) -> None:
        """Load configuration from JSON file"""
        path = Path(config_file) if config_file else self.config_dir / "topo_settings.json"

        if path.exists():
            try:
                with open(path, 'r') as f:
                    file_config = json.load(f)
                    self._merge_config(file_config)
                logger.info(f"Configuration loaded from {path}")
            except (OSError, ValueError) as e:
                logger.warning(f"Could not load config file: {e}")
        else:
            logger.debug("No config file found, using defaults")

    def _merge_config(self, file_config: Dict[str, Any]) -> None:
        """Merge file configuration with defaults"""
        for key, value in file_config.items():
            if key in self._config and isinstance(value, dict):
                self._config[key].update(value)
            else:
                self._config[key] = value

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value using dot notation"""
        keys = key.split('.')
        value = self._config

        try:
            for k in keys:
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any) -> None:
        """Set configuration value using dot notation"""
        keys = key.split('.')
        config = self._config

        for k in keys[:-1]:
            if k not in config:
                config[k] = {}
            config = config[k]

        config[keys[-1]] = value

    def get_matching_config(self) -> Dict[str, Any]:
        """Get MATCH-Pair / MATCH-Global defaults"""
        return self._config.get("matching", {})

    def get_loss_config(self) -> Dict[str, float]:
        """Get loss weights and schedule constants"""
        return self._config.get("loss", {})

    def get_metrics_config(self) -> Dict[str, Any]:
        """Get sliding-window metric defaults"""
        return self._config.get("metrics", {})

    def get_threads(self) -> Optional[int]:
        """Get the parallelism cap, None meaning serial execution"""
        return self._config.get("runtime", {}).get("threads")

    def get_reports_dir(self) -> Path:
        """Get the reports directory, creating it on first use"""
        reports_dir = Path(self._config.get("reports", {}).get("dir") or self.logs_dir)
        reports_dir.mkdir(parents=True, exist_ok=True)
        return reports_dir

    def validate_config(self) -> Dict[str, bool]:
        """Validate configuration and return status"""
        tau = self.get("matching.tau_primary")
        threads = self.get_threads()
        lambdas = [self.get(f"loss.{name}") for name in ("lambda_cons", "lambda_intra", "lambda_temp")]
        window = self.get("metrics.window")

        validation = {
            "tau_in_range": isinstance(tau, (int, float)) and 0.0 <= tau <= 1.0,
            "connectivity_valid": self.get("matching.connectivity") in CONNECTIVITY_CHOICES,
            "lambdas_non_negative": all(isinstance(v, (int, float)) and v >= 0 for v in lambdas),
            "window_positive": isinstance(window, int) and window > 0,
            "threads_valid": threads is None or (isinstance(threads, int) and threads > 0)
        }

        validation["all_configured"] = all(validation.values())
        return validation


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """Apply logging.basicConfig from configuration; log records go to stderr"""
    level_name = (level or config.get("logging.level") or "WARNING").upper()
    handlers = [logging.StreamHandler()]
    target = log_file or config.get("logging.file")
    if target:
        handlers.append(logging.FileHandler(target))

    logging.basicConfig(
        level=getattr(logging, level_name, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
    )


# Global configuration instance
config = Config()
