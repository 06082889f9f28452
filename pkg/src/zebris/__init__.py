"""Zero-trust bilateral edge-service trading: clearing, deposit-refund settlement and simulation."""

__version__ = "0.1.0"
