import json
import logging
import os

import yaml

logger = logging.getLogger(__name__)

# Path to YAML defaults
CONFIG_PATH = os.path.abspath(
    os.path.join(os.path.dirname(__file__), "config/defaults.yaml")
)

# Sections whose keys are CLI parameters; key_templates is kept whole, logging is read from the defaults only
PARAMETER_SECTIONS = ("analysis", "reduce", "similarity", "symbolic", "render")
KEY_MODES = ("major", "minor")


class ConfigError(Exception):
    """Raised for unusable configuration (a usage error, not a data error)."""


def load_config(path=CONFIG_PATH):
    """Load the full defaults document from YAML"""
    with open(path, "r") as f:
        return yaml.safe_load(f)


def flatten_parameters(config):
    """Collapse parameter sections into one flag-name → value mapping.

    Top-level scalar keys are taken as-is, so flat JSON config files
    (mirroring flag names) and sectioned YAML files both work.
    """
    flat = {}
    for key, value in (config or {}).items():
        if key in PARAMETER_SECTIONS and isinstance(value, dict):
            flat.update(value)
        elif key != "logging":
            flat[key] = value
    return flat


def load_defaults():
    """Built-in parameter defaults (flat)."""
    return flatten_parameters(load_config())


def check_key_templates(templates):
    """Both modes as 12 float weights each."""
    if not isinstance(templates, dict) or set(templates) != set(KEY_MODES):
        raise ConfigError(f"key_templates needs exactly the modes {', '.join(KEY_MODES)}")
    checked = {}
    for mode in KEY_MODES:
        weights = templates[mode]
        try:
            checked[mode] = [float(v) for v in weights]
        except (TypeError, ValueError):
            raise ConfigError(f"key_templates.{mode} must be a list of numbers, got {weights!r}")
        if len(checked[mode]) != 12:
            raise ConfigError(f"key_templates.{mode} needs 12 weights, got {len(checked[mode])}")
    return checked


def load_key_templates():
    """Binary scale-membership templates used for key association."""
    return check_key_templates(load_config().get("key_templates", {}))


def load_logging_settings():
    return load_config().get("logging", {})


def load_config_file(path):
    """Load a user config file. YAML loader also reads JSON."""
    try:
        with open(path, "r") as f:
            loaded = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {path} is not valid YAML/JSON: {e}")
    if loaded is None:
        return {}
    if not isinstance(loaded, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    if "logging" in loaded:
        raise ConfigError(f"Config file {path}: logging is set in config/defaults.yaml or MIRVIZ_LOG, not per run")
    return flatten_parameters(loaded)


def merge_config(defaults, file_config, flags):
    """Effective parameters: flags > config file > defaults.

    key_templates from the config file replace the default templates
    mode by mode.

    Args:
        defaults (dict): built-in defaults
        file_config (dict): values from --config (may be empty)
        flags (dict): values given explicitly on the command line

    Returns:
        dict: merged parameters
    """
    unknown = sorted(set(file_config) - set(defaults))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
    merged = dict(defaults)
    merged.update(file_config)
    if "key_templates" in file_config:
        if not isinstance(file_config["key_templates"], dict):
            raise ConfigError("key_templates must map mode names to weights")
        merged["key_templates"] = check_key_templates({**defaults["key_templates"], **file_config["key_templates"]})
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def sidecar_path(output_path):
    return f"{output_path}.config.json"


def write_sidecar(output_path, record):
    """Write the effective-config sidecar next to an artifact. Returns the sidecar path."""
    path = sidecar_path(output_path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True, indent=2))
        f.write("\n")
    logger.info(f"Effective config written to {path}")
    return path
