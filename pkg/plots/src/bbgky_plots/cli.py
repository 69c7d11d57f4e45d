"""bbgky-plots <figure-id> --in DIR --out FILE [--format png|svg|pdf]"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FIGURE_IDS, FORMATS, PlotSpec, RenderError, render


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bbgky-plots",
        description="Render standard figures from a bbgky-bose output directory")
    parser.add_argument("figure", choices=FIGURE_IDS)
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="run directory containing manifest.json")
    parser.add_argument("--out", dest="output", required=True)
    parser.add_argument("--format", choices=FORMATS, default=None,
                        help="default: inferred from the output suffix, else png")
    args = parser.parse_args(argv)
    fmt = args.format or (Path(args.output).suffix.lstrip(".").lower() or "png")
    try:
        spec = PlotSpec(Path(args.input_dir), args.figure, Path(args.output), fmt)
        render(spec)
    except RenderError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
