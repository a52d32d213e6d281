"""Command-line entry point: ``bkl-plots --spec <json>``.

The spec JSON is a serialized :class:`~bklcone_plots.render.PlotSpec`.
Exit codes: 0 success, 2 unusable spec, 3 unusable input data.
"""

from __future__ import annotations

import argparse
import json
import sys

from .render import EmptyInputError, MissingColumnsError, PlotError, PlotSpec, SpecError, render

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_INPUT = 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bkl-plots",
        description="Render a figure from simulator CSV outputs, driven by a JSON spec",
    )
    parser.add_argument("--spec", required=True, help="path to the plot-spec JSON")
    args = parser.parse_args(argv)

    try:
        with open(args.spec, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        print(f"error: cannot read spec: {e}", file=sys.stderr)
        return EXIT_SPEC
    except json.JSONDecodeError as e:
        print(f"error: spec file {args.spec!r} is not valid JSON: {e}", file=sys.stderr)
        return EXIT_SPEC

    try:
        spec = PlotSpec.from_doc(doc)
    except SpecError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SPEC

    try:
        result = render(spec)
    except (EmptyInputError, MissingColumnsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except PlotError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: cannot read input: {e}", file=sys.stderr)
        return EXIT_INPUT

    print(
        f"wrote {result.output} ({result.kind}, {result.n_samples} samples, "
        f"{result.n_markers} reflection markers)"
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
