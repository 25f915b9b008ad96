"""Training worker behind the evaluation HTTP protocol.

The worker owns the expensive half of the search loop: it executes candidate
transform code under structural guards, trains a fixed classifier with that
transform as preprocessing, and reports accuracy (or a classified error)
over a JSON wire format. A second endpoint fine-tunes a small causal
language model on pairwise preference datasets using low-rank adapters.

This package deliberately does not import the orchestrator; the HTTP schema
is the only shared surface.
"""

__version__ = "0.1.0"
