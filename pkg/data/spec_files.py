"""
Reader for mechanism and experiment files.

Both are plain `key = value` text with `#` comments. List-valued keys take
comma-separated entries; atoms are written `x:m, x:m`. Experiment files may
inline the mechanism as `mechanism.<key> = value` or point at a mechanism
file (relative to the experiment file) with `mechanism_file`.
"""
from pathlib import Path
from typing import Dict, List, Tuple, Union

from pydantic import ValidationError

from config.errors import ConfigError
from data.models import ExperimentConfig, MechanismSpec

LIST_KEYS = {"t_grid", "theta_grid", "y_grid"}
MECHANISM_PREFIX = "mechanism."


def _parse_atoms(raw: str, path, line: int) -> List[Tuple[float, float]]:
    atoms = []
    for item in filter(None, (part.strip() for part in raw.split(","))):
        try:
            x, m = item.split(":")
            atoms.append((float(x), float(m)))
        except ValueError:
            raise ConfigError(f"atom '{item}' is not of the form x:m", path, line, "atoms") from None
    return atoms


def read_key_values(path: Union[str, Path]) -> Tuple[Dict[str, object], Dict[str, int]]:
    """Parse a key-value file into raw values and the line each key came from"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read file: {e.strerror}", str(path)) from None

    values: Dict[str, object] = {}
    lines: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"expected 'key = value', got '{content}'", str(path), number)
        key, value = (part.strip() for part in content.split("=", 1))
        if not key:
            raise ConfigError("missing key before '='", str(path), number)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", str(path), number, key)
        bare = key[len(MECHANISM_PREFIX):] if key.startswith(MECHANISM_PREFIX) else key
        if bare == "atoms":
            values[key] = _parse_atoms(value, str(path), number)
        elif bare in LIST_KEYS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
        lines[key] = number
    return values, lines


def _config_error(error: ValidationError, path: Path, lines: Dict[str, int]) -> ConfigError:
    first = error.errors()[0]
    loc = [str(part) for part in first["loc"] if not isinstance(part, int)]
    field = ".".join(loc) if loc else None
    key = loc[0] if loc else None
    if loc and loc[0] == "mechanism" and len(loc) > 1:
        key = f"{MECHANISM_PREFIX}{loc[1]}"
    line = lines.get(key) if key else None
    return ConfigError(first["msg"], str(path), line, field)


def load_mechanism(path: Union[str, Path]) -> MechanismSpec:
    path = Path(path)
    values, lines = read_key_values(path)
    try:
        return MechanismSpec.model_validate(values)
    except ValidationError as e:
        raise _config_error(e, path, lines) from None


def load_experiment(path: Union[str, Path], experiment: str = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a file.

    The experiment name comes from the command line when given, otherwise from
    an `experiment` key in the file.
    """
    path = Path(path)
    values, lines = read_key_values(path)
    mechanism = {key[len(MECHANISM_PREFIX):]: value for key, value in values.items()
                 if key.startswith(MECHANISM_PREFIX)}
    data = {key: value for key, value in values.items() if not key.startswith(MECHANISM_PREFIX)}
    if experiment is not None:
        data["experiment"] = experiment

    if mechanism and "mechanism_file" in data:
        raise ConfigError("give either mechanism_file or inline mechanism.* keys, not both",
                          str(path), lines["mechanism_file"], "mechanism_file")
    if "mechanism_file" in data:
        mechanism_path = path.parent / str(data["mechanism_file"])
        data["mechanism"] = load_mechanism(mechanism_path)
    elif mechanism:
        data["mechanism"] = mechanism

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise _config_error(e, path, lines) from None
