"""CLI: ``mlff-extract --spec spec.json`` writes an embedding container."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigurationError, DataError
from .extract import ExtractionSpec, extract


def main(argv=None) -> int:
    level = os.environ.get("MLFF_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="mlff-extract",
        description="Dump multi-level pooled backbone embeddings to a container file",
    )
    parser.add_argument("--spec", required=True, help="JSON extraction spec")
    args = parser.parse_args(argv)
    try:
        path = Path(args.spec)
        if not path.is_file():
            raise ConfigurationError(f"spec file not found: {args.spec}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"spec is not valid JSON: {e}") from e
        spec = ExtractionSpec.from_dict(raw)
        result = extract(spec)
        print(
            f"wrote {result['record_count']} records "
            f"(levels {result['level_dims']}) to {spec.output}"
        )
        return 0
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
