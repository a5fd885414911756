"""Task-aware neural architecture search toolkit.

Maintains a dictionary of solved base tasks, measures task dissimilarity by
how far a feature-transform network can be pruned, builds a restricted
cell-based search space from the most related tasks, and picks architectures
with a gradient-based relaxation search over sampled candidates.
"""

__version__ = "0.1.0"
