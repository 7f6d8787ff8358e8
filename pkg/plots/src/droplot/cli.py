"""`droplot <kind> --in <paths...> --out <image>`.

Exit codes: 0 success, 1 usage error, 2 schema or render failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .io import SchemaError
from .render import PlotJob, PlotKind, render

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="droplot",
        description=(
            "Render static figures from drotrain CSV artifacts. Run-log kinds "
            "(lambda-trajectory, loss-dynamics) consume log CSVs with the "
            "`step,lambda,agg_loss,utility_loss,p50,p90,max,weights_entropy` schema; "
            "sweep kinds (epsilon-sweep, treatment-comparison) consume ablation "
            "summaries with the `parameter,value,seed,final_p90_adv_loss,"
            "final_mean_adv_loss,final_utility_loss,status` schema."
        ),
    )
    parser.add_argument("kind", choices=[k.value for k in PlotKind], help="plot kind")
    parser.add_argument(
        "--in",
        dest="inputs",
        nargs="+",
        required=True,
        type=Path,
        help="input CSV file(s)",
    )
    parser.add_argument("--out", required=True, type=Path, help="output image path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = PlotJob(kind=PlotKind(args.kind), inputs=args.inputs, output=args.out)
        render(job)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
