"""Quality-proxy supervision for speech enhancement at desk scale."""

__version__ = "0.1.0"
