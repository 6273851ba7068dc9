"""cyclevc: parallel-data-free voice conversion.

Learns a source-to-target spectral mapping from unpaired corpora with a
cycle-consistent adversarial network built from gated convolutions, and
ships the feature pipeline, training loop, conversion path and objective
evaluation suite around it.
"""

__version__ = "0.1.0"
