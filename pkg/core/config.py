# core/config.py
#
# Configuration records shared by every layer, plus loading of run
# configurations from YAML/JSON files. The loader acts as a gateway so the
# rest of the application deals with well-structured data.

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml


class ConfigValidationError(Exception):
    """Custom exception for errors during configuration file validation."""
    pass


@dataclass(frozen=True)
class Tolerances:
    """Certification thresholds. Every numeric check reads its threshold from here."""
    hermiticity: float = 1e-10
    psd: float = 1e-10  # eigenvalues >= -psd count as nonnegative
    trace: float = 1e-12
    pt_invariance: float = 1e-12
    symmetry: float = 1e-12
    orthonormality: float = 1e-10
    linear_system: float = 1e-10
    singular_det: float = 1e-12
    weight: float = 1e-10  # weights >= -weight count as nonnegative
    tan_pole: float = 1e-9
    violation_margin: float = 1e-9
    imaginary_part: float = 1e-10

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "Tolerances":
        if not data:
            return cls()
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigValidationError(f"Unknown tolerance key(s): {', '.join(unknown)}")
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except (TypeError, ValueError) as e:
            raise ConfigValidationError(f"Tolerances must be numbers: {e}")


DEFAULT_TOLERANCES = Tolerances()


@dataclass
class SearchConfig:
    """Multi-start Nelder-Mead settings"""
    starts: int = 100
    max_iterations: int = 500  # per simplex run
    xatol: float = 1e-9  # simplex diameter threshold
    search_radius: float = 0.1  # initial simplex edge, radians; 0 disables moves
    restarts: int = 1
    max_workers: Optional[int] = None
    max_start_draws: int = 1000  # re-draws per start until the objective is finite
    start_points: Optional[List[Tuple[float, float, float, float, float]]] = None

    def validate(self) -> None:
        if self.start_points is not None:
            if not self.start_points:
                raise ConfigValidationError("'start_points' must not be empty.")
            for point in self.start_points:
                if len(point) != 5:
                    raise ConfigValidationError(
                        "Each start point needs 5 values: alpha, beta, gamma, theta1, theta2."
                    )
        elif self.starts < 1:
            raise ConfigValidationError("'starts' must be at least 1.")
        if self.max_iterations < 1:
            raise ConfigValidationError("'max_iterations' must be at least 1.")
        if self.xatol <= 0:
            raise ConfigValidationError("'xatol' must be positive.")
        if self.search_radius < 0:
            raise ConfigValidationError("'search_radius' must be nonnegative.")
        if self.restarts < 0:
            raise ConfigValidationError("'restarts' must be nonnegative.")
        if self.max_start_draws < 1:
            raise ConfigValidationError("'max_start_draws' must be at least 1.")

    @property
    def start_count(self) -> int:
        return len(self.start_points) if self.start_points is not None else self.starts


@dataclass(frozen=True)
class AxisRange:
    start: float
    stop: float
    steps: int

    def values(self) -> List[float]:
        """`steps` evenly spaced values, both ends included exactly."""
        return np.linspace(self.start, self.stop, self.steps).tolist()


@dataclass
class ScanConfig:
    """Grid over (alpha, beta, gamma); each axis inclusive of both ends"""
    alpha: AxisRange
    beta: AxisRange
    gamma: AxisRange
    with_s: bool = False
    theta_steps: int = 12
    max_workers: Optional[int] = None

    def validate(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            axis = getattr(self, name)
            if axis.steps < 1:
                raise ConfigValidationError(f"Grid axis '{name}' needs a positive step count.")
            if not (math.isfinite(axis.start) and math.isfinite(axis.stop)):
                raise ConfigValidationError(f"Grid axis '{name}' must have finite bounds.")
        if self.with_s and self.theta_steps < 1:
            raise ConfigValidationError("'theta_steps' must be at least 1.")

    @property
    def cell_count(self) -> int:
        return self.alpha.steps * self.beta.steps * self.gamma.steps


@dataclass
class RunConfig:
    """
    Everything needed to re-run a command. Reports embed it verbatim so a
    report can be fed back through `--config`.
    """
    command: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    tolerances: Tolerances = DEFAULT_TOLERANCES

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "parameters": dict(self.parameters),
            "tolerances": self.tolerances.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        _validate_run_config_structure(data)
        return cls(
            command=data["command"],
            parameters=dict(data.get("parameters") or {}),
            tolerances=Tolerances.from_dict(data.get("tolerances")),
        )

    def with_tolerances(self, **overrides: Optional[float]) -> "RunConfig":
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        return replace(self, tolerances=replace(self.tolerances, **changes))


def _validate_run_config_structure(data: Any) -> None:
    """
    Validates the RunConfig structure.
    Raises ConfigValidationError with a specific message if any check fails.
    """
    if not isinstance(data, dict):
        raise ConfigValidationError("A run configuration must be a mapping.")
    if "command" not in data:
        raise ConfigValidationError("Run configuration is missing the required 'command' key.")
    if not isinstance(data["command"], str):
        raise ConfigValidationError("The 'command' key must be a string.")
    if "parameters" in data and data["parameters"] is not None and not isinstance(data["parameters"], dict):
        raise ConfigValidationError("The 'parameters' section must be a dictionary.")
    if "tolerances" in data and data["tolerances"] is not None and not isinstance(data["tolerances"], dict):
        raise ConfigValidationError("The 'tolerances' section must be a dictionary.")


def load_run_config(file_path: str) -> RunConfig:
    """
    Loads and validates a run configuration from a file path.

    The file may hold a bare RunConfig mapping or a full report carrying one
    under the 'run_config' key.

    :param file_path: Path to a YAML or JSON file.
    :return: The parsed RunConfig.
    :raises ConfigValidationError: If the file is not found, poorly formatted, or fails validation.
    """
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigValidationError(f"The file could not be found at path: {file_path}")
    except yaml.YAMLError as e:
        raise ConfigValidationError(f"Error parsing configuration file: {e}")
    except UnicodeDecodeError as e:
        raise ConfigValidationError(f"Failed to decode file using UTF-8 (Check file encoding): {e}")

    # Empty file or comments only
    if data is None:
        raise ConfigValidationError("The configuration file is empty or invalid.")

    if isinstance(data, dict) and "run_config" in data:
        data = data["run_config"]

    return RunConfig.from_dict(data)


def parse_start_points(raw: Sequence[Sequence[float]]) -> List[Tuple[float, float, float, float, float]]:
    points = []
    for entry in raw:
        try:
            values = tuple(float(v) for v in entry)
        except (TypeError, ValueError) as e:
            raise ConfigValidationError(f"Invalid start point {entry!r}: {e}")
        if len(values) != 5:
            raise ConfigValidationError(f"Start point {entry!r} must have 5 values.")
        points.append(values)
    return points
