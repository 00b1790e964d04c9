"""Command line: read a config file, extract, write the document."""

from __future__ import annotations

import argparse
import configparser
import sys

from .introspect import DEFAULT_EXCLUDE, ExtractionConfig, ExtractionError, extract_graph


def load_config(path: str) -> ExtractionConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ExtractionError(f"config file not found: {path}")
    if not parser.has_section("extract"):
        raise ExtractionError("config needs an [extract] section")
    section = parser["extract"]

    def split_patterns(raw: str | None, fallback: tuple[str, ...]) -> tuple[str, ...]:
        if raw is None:
            return fallback
        return tuple(p.strip() for p in raw.split(",") if p.strip()) or fallback

    try:
        return ExtractionConfig(
            library=section.get("library", ""),
            version=section.get("version", ""),
            output_path=section.get("output", ""),
            include=split_patterns(section.get("include"), ("*",)),
            exclude=split_patterns(section.get("exclude"), DEFAULT_EXCLUDE),
            skip_private=section.getboolean("skip_private", fallback=True),
            summary_cap=section.getint("summary_cap", fallback=400),
            require_method_doc=section.getboolean("require_method_doc", fallback=True),
        )
    except ValueError as exc:
        raise ExtractionError(f"bad value in {path}: {exc}") from exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kgextract",
        description="Emit a library's documentation knowledge-base document.",
    )
    parser.add_argument("config", help="extraction config file (INI format)")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        summary = extract_graph(config)
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {summary['catalogues']} catalogue and {summary['callables']} callable "
        f"nodes to {summary['output_path']}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
