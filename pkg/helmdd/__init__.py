"""
Overlapping Schwarz (ORAS) for the Helmholtz equation: degree-2 finite
elements on rectangles, strip/checkerboard/partition covers, impedance-map
norms and the closed-form 1-d and combinatorial checks.
"""

__version__ = "0.1.0"
