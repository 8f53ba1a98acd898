"""Monitor synthesis and deployment for probabilistic session types."""

from importlib import resources


def protocol_path(name: str) -> str:
    """Filesystem path of a bundled protocol artifact, e.g. ``game.pst``."""
    return str(resources.files(__name__) / "protocols" / name)
