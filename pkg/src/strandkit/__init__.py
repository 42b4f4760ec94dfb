"""strandkit: strand-level hair geometry reconstruction toolkit.

Pipeline: synthetic scene generation -> outer-shell extraction ->
multi-view direction optimization -> occupancy/orientation volume ->
parallel strand growing -> occupancy/orientation evaluation.
"""

__version__ = "0.1.0"
