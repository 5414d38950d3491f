"""Run configuration shared by every CLI subcommand."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, timezone
from typing import List, Optional

from .errors import InvalidInput
from .predictor import INPUT_SPAN, TrainConfig


@dataclass
class RunConfig:
    days: Optional[List[str]] = None
    correlation_method: str = "spearman"
    spearman_strong: float = 0.9
    correlation_bin: Optional[int] = None
    anomaly_metric: str = "node_load1"
    anomaly_percentile: float = 97.0
    anomaly_bin: int = 300
    zscore_window: int = 12
    anomaly_global: bool = False
    anomaly_slack: int = 60
    granularities: List[int] = field(default_factory=lambda: [15, 60, 300, 600])
    predict_metrics: List[str] = field(default_factory=lambda: ["node_load1", "node_sockstat_sockets_used"])
    predict_nodes: Optional[List[str]] = None
    hidden_size: int = 32
    learning_rate: float = 1.0
    max_epochs: int = 50
    patience: int = 5
    huber_delta: float = 1.0
    eval_fraction: float = 0.10
    batch_size: int = 1
    save_models: bool = False
    pivot: str = "2020-02-27"
    period_metrics: List[str] = field(
        default_factory=lambda: ["node_load1", "server_power_watts", "server_temperature_celsius"])
    storage_metrics: Optional[List[str]] = None
    storage_compressor: str = "zlib"
    exclude_racks: List[str] = field(default_factory=list)
    drop_partial: bool = False
    tz_offset: int = 0
    seed: int = 0
    workers: int = 1

    def validate(self):
        if not 0 < self.spearman_strong <= 1:
            raise InvalidInput("spearman_strong must lie in (0, 1]")
        if self.correlation_method not in ("pearson", "spearman", "kendall"):
            raise InvalidInput(f"unknown correlation method {self.correlation_method!r}")
        if not 0 < self.anomaly_percentile <= 100:
            raise InvalidInput("anomaly_percentile must lie in (0, 100]")
        if self.zscore_window < 2:
            raise InvalidInput("zscore_window must be >= 2")
        if self.anomaly_slack < 0:
            raise InvalidInput("anomaly_slack must be >= 0")
        if not self.granularities:
            raise InvalidInput("granularities must not be empty")
        for g in self.granularities:
            if g <= 0 or g % 15 or INPUT_SPAN % g:
                raise InvalidInput(f"granularity {g} must be a multiple of 15 s dividing {INPUT_SPAN} s")
        if self.workers < 1:
            raise InvalidInput("workers must be >= 1")
        self.train_config()
        self.pivot_epoch()
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, huber_delta=self.huber_delta,
                           max_epochs=self.max_epochs, patience=self.patience, eval_fraction=self.eval_fraction,
                           seed=self.seed, hidden_size=self.hidden_size, batch_size=self.batch_size)

    def pivot_epoch(self) -> int:
        return parse_time(self.pivot)

    def day_list(self):
        if self.days is None:
            return None
        try:
            return [date.fromisoformat(d) for d in self.days]
        except ValueError as exc:
            raise InvalidInput(f"bad day in day list: {exc}") from None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise InvalidInput(f"unknown config key(s): {sorted(bad)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        path = str(path)
        if path.endswith(".toml"):
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                return cls.from_dict(tomllib.load(fh))
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def parse_time(value) -> int:
    """Epoch seconds from an int, a digit string, or an ISO date/datetime (UTC)."""
    if isinstance(value, int):
        return value
    text = str(value).strip()
    if text.lstrip("-").isdigit():
        return int(text)
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise InvalidInput(f"cannot parse time {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())
