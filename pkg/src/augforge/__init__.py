"""augforge: performance-guided discovery of image-augmentation code.

The package closes the loop between code generation and empirical feedback:
transform pipelines are enumerated brute-force or requested from an LLM,
every candidate is evaluated by a worker (or a deterministic surrogate),
results land in an append-only performance repository, and "B better than A"
preference pairs distilled from that repository feed iterative fine-tuning.
"""

__version__ = "0.1.0"

# Version tag of the built-in transform catalog. Bumped whenever op
# membership, parameter domains, templates, or fixed-tail constants change,
# so stored campaigns remain comparable.
CATALOG_VERSION = "augforge-catalog-v1"
