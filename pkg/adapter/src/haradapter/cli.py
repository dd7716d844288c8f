"""Command-line entry point for batch inference."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .adapter import infer
from .config import AdapterConfig, AdapterError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="har-adapter",
        description="Run action recognition models over manifest videos "
        "and emit a prediction-log CSV",
    )
    parser.add_argument("--config", required=True, help="adapter config JSON")
    args = parser.parse_args(argv)
    config_path = Path(args.config)
    try:
        if not config_path.is_file():
            raise AdapterError(f"config not found: {config_path}")
        config = AdapterConfig.from_json(
            config_path.read_text(encoding="utf-8"), base_dir=config_path.parent
        )
        result = infer(config)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {result.rows} rows to {config.output} "
        f"({result.videos_ok} videos ok, {result.videos_failed} failed; "
        f"failures in {config.errors})"
    )
    return 0 if result.videos_failed == 0 else 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
