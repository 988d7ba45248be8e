import argparse
import logging
import logging.config
from pathlib import Path
from typing import List, Optional

from noidkit import __version__
from noidkit.commands.run import cmd_mesh, cmd_solve, cmd_validate, cmd_verify, parse_ladder
from noidkit.config import get_settings

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False) -> None:
    """fileConfig from logging.ini when present, basicConfig otherwise."""
    settings = get_settings()
    config_path = settings.log_config
    if config_path is not None and Path(config_path).is_file():
        logging.config.fileConfig(config_path, disable_existing_loggers=False)
    else:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    if verbose or settings.debug:
        logging.getLogger().setLevel(logging.DEBUG)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noidkit",
        description="CMC n-noids by the loop-group Weierstrass method: validate, solve, mesh, verify.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=None, help="Output directory for artifacts, meshes and reports.")
    common.add_argument("--t", type=parse_ladder, default=None, help="Comma separated t-ladder, e.g. 1e-4,2e-4.")
    common.add_argument("--workers", type=int, default=None, help="Worker threads (1 runs inline, deterministic).")
    common.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level.")

    numeric = argparse.ArgumentParser(add_help=False)
    numeric.add_argument("--config", type=Path, default=None, help="JSON run config.")
    numeric.add_argument("--truncation", type=int, default=None, help="Laurent truncation N.")
    numeric.add_argument("--rho", type=float, default=None, help="Weight radius of the loop algebra.")

    commands = parser.add_subparsers(dest="command", required=True)

    validate = commands.add_parser("validate", parents=[common, numeric], help="Check the minimal input data.")
    validate.set_defaults(handler=cmd_validate)

    solve = commands.add_parser("solve", parents=[common, numeric], help="Solve the Monodromy Problem along t.")
    solve.add_argument("--resume", type=Path, default=None, help="Partial artifact to continue from.")
    solve.set_defaults(handler=cmd_solve)

    mesh = commands.add_parser("mesh", parents=[common], help="Write OBJ meshes of solved surfaces.")
    mesh.add_argument("--artifact", type=Path, default=None, help="Artifact file or directory (default: --out).")
    mesh.add_argument("--resume", type=Path, default=None, help=argparse.SUPPRESS)
    mesh.set_defaults(handler=cmd_mesh)

    verify = commands.add_parser("verify", parents=[common], help="Verify a solved artifact.")
    verify.add_argument("--artifact", type=Path, default=None, help="Artifact file or directory (default: --out).")
    verify.add_argument("--resume", type=Path, default=None, help=argparse.SUPPRESS)
    verify.add_argument("--no-geometry", action="store_true", help="Skip mesh-based checks.")
    verify.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    logger.info("noidkit %s: %s", __version__, args.command)
    return args.handler(args)
