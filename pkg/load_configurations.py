"""Functions for loading analysis scenarios from YAML (or JSON) files."""
import copy
import json
import logging
import os

import jsonschema
import yaml

logger = logging.getLogger(__name__)

SCHEMA_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configurations", "scenario_schema.json")

COMMANDS = ("growth-check", "k-sweep", "rbmo", "jn-tail", "maximal", "cz", "t1", "curvature", "commutator",
            "equivalence-sweep")

DEFAULT_SETTINGS = {
    "function": None,
    "context": {"rho": 2.0},
    "family": {"min_side": None, "max_side": None, "shifts": 0, "seed": 0, "max_centers": None,
               "full_pairs": False, "extra_cubes": []},
    "params": {},
    "output": {"dir": "results"},
    "seed": 0,
    "threads": 1,
}


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be read or does not match the scenario schema."""


def _schema() -> dict:
    with open(SCHEMA_PATH, "r") as file:
        return json.load(file)


def validate_scenario(config_data: dict, source: str = "<scenario>") -> dict:
    """Check a loaded scenario against the schema and return its InitializationSettings."""
    try:
        jsonschema.validate(config_data, _schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(f"Scenario {source} is invalid at '{where}': {e.message}") from e
    return config_data["InitializationSettings"]


def resolve_defaults(settings: dict) -> dict:
    """Scenario settings with every optional key filled in."""
    resolved = copy.deepcopy(DEFAULT_SETTINGS)
    for key, value in settings.items():
        if isinstance(value, dict) and isinstance(resolved.get(key), dict):
            resolved[key].update(copy.deepcopy(value))
        else:
            resolved[key] = copy.deepcopy(value)
    return resolved


def load_scenario(path: str) -> dict:
    """Load, validate and resolve one scenario file."""
    try:
        with open(path, "r") as file:
            config_data = yaml.safe_load(file)
    except (OSError, yaml.YAMLError) as e:
        raise ScenarioError(f"Scenario file {path} could not be read: {e}") from e
    settings = resolve_defaults(validate_scenario(config_data, path))
    logger.info("loaded scenario %s (config %s, command %s)", path, settings["config_id"], settings["command"])
    return settings


def load_configurations(configurations_folder_path: str) -> dict[str, dict]:
    """Load every scenario in the folder, keyed "config <config_id>"."""
    config_files = sorted(f for f in os.listdir(configurations_folder_path) if f.endswith((".yaml", ".yml", ".json")))
    scenarios = {}
    for config_file in config_files:
        if config_file == os.path.basename(SCHEMA_PATH):
            continue
        settings = load_scenario(os.path.join(configurations_folder_path, config_file))
        key = f"config {settings['config_id']}"
        if key in scenarios:
            raise ScenarioError(f"Scenario file {config_file} repeats config_id {settings['config_id']!r}.")
        scenarios[key] = settings
    return scenarios
