"""Rule and path based joint knowledge graph embedding (RPJE)."""

__version__ = "0.1.0"
