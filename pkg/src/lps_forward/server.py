"""MCP Server for the LPS forward solver.

This module implements the Model Context Protocol (MCP) server that registers
and routes the solver tools.

Tools provided:
    1. scale_parameters - Nondimensional constants of a configuration
    2. solve_asymptotic - Second-order cascade at one beam position
    3. solve_full - Full coupled model at one beam position
    4. run_scan - Laser scan written to scan.csv
    5. series_check - Expansion coefficients against the finite-difference oracle
    6. run_validation - Acceptance suite written to validation.json
"""

import asyncio
import json
from typing import Any

from mcp.server import Server
from mcp.types import Resource, TextContent, Tool

from .config import config_reference
from .tools import scale, scan, series, solve, validate

server = Server("lps-forward")

CONFIG_REFERENCE_URI = "lps://config/reference"

_CONFIG_PROPERTIES: dict[str, Any] = {
    "config": {
        "type": "string",
        "description": "Path to a key = value configuration file",
    },
    "overrides": {
        "type": "object",
        "description": "Dotted keys replacing file values, e.g. {\"laser.sigma_um\": 30}",
    },
}

_OUT_PROPERTY: dict[str, Any] = {
    "out": {"type": "string", "description": "Output directory (default: run.out)"},
}

_X0_PROPERTY: dict[str, Any] = {
    "x0": {"type": "number", "description": "Scaled beam position (default: laser.x0)"},
}


def _schema(properties: dict[str, Any]) -> dict[str, Any]:
    return {"type": "object", "properties": properties, "required": []}


@server.list_tools()  # type: ignore[misc,no-untyped-call]
async def list_tools() -> list[Tool]:
    """List all 6 available tools with their schemas.

    Returns:
        List of Tool objects with proper input schemas
    """
    coefficient_array = {"type": "array", "items": {"type": "number"}}
    return [
        Tool(
            name="scale_parameters",
            description="Compute lambda, delta and all scaled constants of a configuration.",
            inputSchema=_schema(dict(_CONFIG_PROPERTIES)),
        ),
        Tool(
            name="solve_asymptotic",
            description=(
                "Run the second-order asymptotic cascade for one laser position; reports "
                "uD2, the dimensional voltage and every analytic bound check."
            ),
            inputSchema=_schema({**_CONFIG_PROPERTIES, **_OUT_PROPERTY, **_X0_PROPERTY}),
        ),
        Tool(
            name="solve_full",
            description=(
                "Solve the full coupled drift-diffusion model with the resistor coupling "
                "for one laser position (solver.delta overrides the small parameter)."
            ),
            inputSchema=_schema({**_CONFIG_PROPERTIES, **_OUT_PROPERTY, **_X0_PROPERTY}),
        ),
        Tool(
            name="run_scan",
            description="Scan the laser over the configured positions and write scan.csv.",
            inputSchema=_schema(
                {
                    **_CONFIG_PROPERTIES,
                    **_OUT_PROPERTY,
                    "threads": {"type": "integer", "minimum": 1},
                    "fail_fast": {"type": "boolean"},
                }
            ),
        ),
        Tool(
            name="series_check",
            description=(
                "Expand n, p and R in powers of delta and compare with finite differences."
            ),
            inputSchema=_schema(
                {
                    **_CONFIG_PROPERTIES,
                    "psi": coefficient_array,
                    "phin": coefficient_array,
                    "phip": coefficient_array,
                    "order": {"type": "integer", "minimum": 0, "maximum": 8, "default": 3},
                    "seed": {"type": "integer", "default": 0},
                    "tolerance": {"type": "number", "default": 1e-6},
                }
            ),
        ),
        Tool(
            name="run_validation",
            description="Run the acceptance criteria and write validation.json.",
            inputSchema=_schema(
                {
                    **_CONFIG_PROPERTIES,
                    **_OUT_PROPERTY,
                    "only": {"type": "array", "items": {"type": "string"}},
                }
            ),
        ),
    ]


@server.list_resources()  # type: ignore[misc,no-untyped-call]
async def list_resources() -> list[Resource]:
    """List available documentation resources."""
    return [
        Resource(
            uri=CONFIG_REFERENCE_URI,  # type: ignore[arg-type]
            name="Configuration key reference",
            description="Every accepted dotted configuration key",
            mimeType="text/plain",
        )
    ]


@server.read_resource()  # type: ignore[misc,no-untyped-call]
async def read_resource(uri: str) -> str:
    """Read a documentation resource.

    Raises:
        ValueError: If the URI is unknown
    """
    if str(uri) == CONFIG_REFERENCE_URI:
        return "\n".join(config_reference()) + "\n"
    raise ValueError(f"Unknown resource URI: {uri}")


def dispatch(name: str, arguments: dict[str, Any]) -> dict[str, Any]:
    """Call the tool ``name`` with MCP arguments.

    Raises:
        ValueError: If tool name is unknown
    """
    common = {"config": arguments.get("config"), "overrides": arguments.get("overrides")}
    if name == "scale_parameters":
        return scale.scale_parameters(**common)
    if name == "solve_asymptotic":
        return solve.solve_asymptotic(**common, out=arguments.get("out"), x0=arguments.get("x0"))
    if name == "solve_full":
        return solve.solve_full(**common, out=arguments.get("out"), x0=arguments.get("x0"))
    if name == "run_scan":
        return scan.run_scan(
            **common,
            out=arguments.get("out"),
            threads=arguments.get("threads"),
            fail_fast=arguments.get("fail_fast"),
        )
    if name == "series_check":
        return series.series_check(
            psi=arguments.get("psi"),
            phin=arguments.get("phin"),
            phip=arguments.get("phip"),
            order=arguments.get("order", 3),
            seed=arguments.get("seed", 0),
            tolerance=arguments.get("tolerance", series.DEFAULT_TOLERANCE),
            **common,
        )
    if name == "run_validation":
        return validate.run_validation(
            **common, out=arguments.get("out"), only=arguments.get("only")
        )
    raise ValueError(f"Unknown tool: {name}")


@server.call_tool()  # type: ignore[misc]
async def call_tool(name: str, arguments: dict[str, Any]) -> list[TextContent]:
    """Route tool calls to appropriate implementations.

    Solver work runs in a worker thread so the event loop stays responsive.

    Args:
        name: Name of the tool to call
        arguments: Dictionary of tool arguments

    Returns:
        List containing a single TextContent with JSON-formatted result

    Raises:
        ValueError: If tool name is unknown
    """
    result = await asyncio.to_thread(dispatch, name, arguments or {})
    return [TextContent(type="text", text=json.dumps(result, indent=2, default=float))]


async def main() -> None:
    """Run the MCP server using stdio transport."""
    from mcp.server.stdio import stdio_server

    async with stdio_server() as (read_stream, write_stream):
        await server.run(
            read_stream,
            write_stream,
            server.create_initialization_options(),
        )


def run() -> None:
    """Console-script entry point of ``lps-forward-mcp``."""
    asyncio.run(main())


if __name__ == "__main__":
    run()
