"""CLI and HTTP/WS service exposing the workbench."""

from . import artifacts, cli, evalsuite, runs  # noqa: F401
