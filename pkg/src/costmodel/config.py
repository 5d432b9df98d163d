"""hyperparameters of the probabilistic cost model"""
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict

from typing_extensions import Self

from ..datasources import load_config
from ..errors import ConfigurationError


@dataclass(frozen=True)
class ModelConfig:
    """architecture and training settings

    dropout 0 builds a point estimate model whose model variance is always 0.
    calibrate_variance rescales the data variance on the validation split
    after training (see `calibrate_variance` in training)

    Usage:
        >>> cfg = ModelConfig.from_file("configs/model.json")
        >>> small = ModelConfig(hidden=16, max_epochs=5)
    """
    graph_layers: int = 2
    tree_layers: int = 2
    hidden: int = 64
    dropout: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    mc_iterations: int = 10
    calibrate_variance: bool = True

    def __post_init__(self) -> None:
        if self.graph_layers < 1 or self.tree_layers < 1:
            raise ConfigurationError("graph_layers and tree_layers must be >= 1")
        if self.hidden < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("hidden, batch_size and max_epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.patience < 1 or self.plateau_patience < 1:
            raise ConfigurationError("patience and plateau_patience must be >= 1")
        if not 0.0 < self.plateau_factor <= 1.0:
            raise ConfigurationError(f"plateau_factor must be in (0, 1], got {self.plateau_factor}")
        if self.mc_iterations < 1:
            raise ConfigurationError(f"mc_iterations must be >= 1, got {self.mc_iterations}")

    @property
    def risk_capable(self) -> bool:
        return self.dropout > 0.0

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> Self:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def from_file(cls, path: str) -> Self:
        """read a model config; a document with a `model` section uses that section"""
        data = load_config(path)
        return cls.from_dict(data.get("model", data))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
