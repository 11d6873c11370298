from __future__ import annotations

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    log_level: str = 'info'
    # JSON lines on stderr; set TRAJ_LOG_JSON=false for the console renderer
    log_json: bool = True

    # Command defaults. Every command echoes the values it actually used.
    default_epsilon: float = 10.0
    default_xi: int = 32
    default_ns: int = 15
    default_prob_threshold: float = 0.5
    default_seed: int = 0
    default_threads: int = 1
    default_format: str = 'table'

    model_config = SettingsConfigDict(env_prefix='TRAJ_')


def get_settings() -> Settings:
    s = Settings()
    return s
