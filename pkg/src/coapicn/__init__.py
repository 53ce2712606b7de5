"""CoAP over a publish/subscribe ICN core, in a deterministic simulator."""

__version__ = "0.1.0"
