"""`schema`: print the JSON schema of experiment files."""
import json
import sys

from ..errors import OutputError
from ..models.schemas import config_schema


def register(subparsers) -> None:
    parser = subparsers.add_parser("schema", help="print the experiment config JSON schema")
    parser.add_argument("--out", default=None, help="write the schema to this file instead")
    parser.set_defaults(handler=handle)


def handle(args) -> None:
    text = json.dumps(config_schema(), indent=2, sort_keys=True) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return
    try:
        with open(args.out, "w") as f:
            f.write(text)
    except OSError as e:
        raise OutputError(f"cannot write {args.out}: {e}", args.out) from e
