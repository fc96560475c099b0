"""Entry point of the icb-response MCP server.

The transport comes from ``--transport`` or, failing that, from
``ICB_MCP_TRANSPORT``. Logs go to stderr so they never mix with the stdio
protocol stream.
"""

from __future__ import annotations

import argparse
import logging
import sys

from icb_response.cli import EXIT_ERROR, EXIT_OK
from icb_response.config import MCP_TRANSPORTS, get_log_level, get_mcp_transport
from icb_response.mcp_server import mcp

logger = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icb-response-mcp",
        description="Serve the ICB response model over the Model Context Protocol.",
    )
    parser.add_argument(
        "--transport",
        choices=MCP_TRANSPORTS,
        help="Protocol transport (default: $ICB_MCP_TRANSPORT or stdio)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    """Start the MCP server and return the process exit status."""
    args = _build_parser().parse_args(argv)
    try:
        level = get_log_level()
        transport = args.transport or get_mcp_transport()
    except ValueError as exc:
        print(f"icb-response-mcp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    logger.info("Starting MCP server '%s' over %s", mcp.name, transport)
    mcp.run(transport=transport)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
