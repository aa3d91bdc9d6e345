"""Flight-time prediction from network delay states, and fuel-loading analytics.

The package covers the full pipeline: METAR and flight-record ingestion,
hourly network delay-state features, a spatial-weighted recurrent network
with a two-step per-route training procedure, baselines and evaluation
reports, a fuel-loading policy simulator, and a synthetic-world generator
that plants recoverable structure for verification.
"""

__version__ = "0.1.0"
