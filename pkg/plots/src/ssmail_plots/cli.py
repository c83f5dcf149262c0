"""Figure rendering command line: `ssmail-plots render --spec file.json`.

The spec file mirrors FigureSpec: {"kind", "inputs", "output", "labels"}.
A file of the form {"panels": [spec, ...], "output": path} renders a
multi-panel comparison with shared scales instead.
"""

import argparse
import json
import sys

from .figures import FigureSpec, compare, render


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ssmail-plots")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render a figure from a spec file")
    p.add_argument("--spec", required=True)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        with open(args.spec) as fh:
            data = json.load(fh)
        if "panels" in data:
            specs = [FigureSpec.from_dict(d) for d in data["panels"]]
            info = compare(specs, output=data.get("output"))
        else:
            info = render(FigureSpec.from_dict(data))
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"render failed: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {info['output']} ({info['panels']} panel(s))")
    return 0


if __name__ == "__main__":
    sys.exit(main())
