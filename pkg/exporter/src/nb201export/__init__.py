"""NAS-Bench-201 archive to JSONL benchmark exporter."""

__version__ = "0.1.0"
