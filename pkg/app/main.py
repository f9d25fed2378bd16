import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import yaml
from pydantic import ValidationError

from config import settings
from core.exceptions import ConfigError
from schemas import ExperimentConfig
from services import experiment_service

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughslip",
        description="Stokes with Navier slip on rough domains: deterministic experiment runner.",
    )
    parser.add_argument("config_path", nargs="?", help="experiment config (YAML or JSON)")
    parser.add_argument("--config", dest="config_flag", help="experiment config (YAML or JSON)")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    parser.add_argument("--seed", type=int, help="overrides the seed in the config")
    parser.add_argument("--threads", type=int, help=f"caps internal parallelism (default: {settings.default_threads})")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    return parser


def load_config(path: str, seed: Optional[int] = None) -> ExperimentConfig:
    """
    Reads and validates an experiment config. A missing file or a malformed
    document raises ConfigError; schema violations raise ValidationError.
    """
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f) if not path.endswith(".json") else json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    if seed is not None:
        raw["seed"] = seed
    return ExperimentConfig.model_validate(raw)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(levelname)s %(asctime)s | %(name)s | %(message)s",
    )

    if args.print_schema:
        print(json.dumps(ExperimentConfig.model_json_schema(), indent=2, sort_keys=True))
        return 0

    path = args.config_flag or args.config_path
    if path is None:
        logger.error("No config given: pass a config path or --config PATH.")
        return 2
    try:
        config = load_config(path, args.seed)
    except ValidationError as e:
        logger.error(f"Config {path} does not match the schema:\n{e}")
        return 2
    except ConfigError as e:
        logger.error(str(e))
        return 2

    if args.threads is not None and args.threads < 1:
        logger.error("--threads must be at least 1")
        return 2
    threads = args.threads or settings.default_threads

    os.makedirs(args.out, exist_ok=True)
    return experiment_service.run(config, args.out, threads)


if __name__ == "__main__":
    sys.exit(main())
