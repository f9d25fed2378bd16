import logging
import os
from typing import Any, Dict, Optional

import yaml

logger = logging.getLogger(__name__)

FIXTURES_FILE_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), 'resources', 'fixtures.yaml')
_cached_fixtures: Optional[Dict[str, Any]] = None


def load_fixtures() -> Dict[str, Any]:
    """
    Loads the fixture catalog from resources/fixtures.yaml.
    """
    global _cached_fixtures
    if _cached_fixtures is not None:
        return _cached_fixtures

    try:
        with open(FIXTURES_FILE_PATH, 'r') as f:
            data = yaml.safe_load(f)
        logger.info(f"Loaded fixture catalog from {FIXTURES_FILE_PATH}")
        _cached_fixtures = data or {}
        return _cached_fixtures
    except FileNotFoundError:
        logger.error(f"Fixture catalog not found at {FIXTURES_FILE_PATH}.")
        return {}
    except yaml.YAMLError as e:
        logger.error(f"Error parsing fixture catalog {FIXTURES_FILE_PATH}: {e}")
        return {}


def get_fixture(key: str) -> Dict[str, Any]:
    """
    Returns the parameter block of one fixture, or an empty dict if it is missing.
    """
    data = load_fixtures()
    if not data or 'fixtures' not in data:
        logger.error("Fixture catalog not loaded or missing 'fixtures' root key.")
        return {}

    block = data['fixtures'].get(key)
    if block is None:
        logger.warning(f"Fixture '{key}' not found in fixtures.yaml.")
        return {}
    return dict(block)


def load_yaml_file(path: str) -> Dict[str, Any]:
    """Reads a user-supplied YAML file (configs, chart and atlas files)."""
    with open(path, 'r') as f:
        data = yaml.safe_load(f)
    return data or {}


def get_profile(name: str) -> Dict[str, Any]:
    """Closed-form profile entry from the catalog ('kind' plus 'params')."""
    data = load_fixtures()
    profiles = data.get('profiles', {}) if data else {}
    if name not in profiles:
        raise KeyError(f"Profile '{name}' not found in fixtures.yaml; known: {', '.join(sorted(profiles))}")
    return dict(profiles[name])
