from .config import RunConfig, config, load_run_config

__all__ = ["RunConfig", "config", "load_run_config"]
