"""Goal-conditioned reinforcement-learning lab.

Trains goal-conditioned policies with a clipped-surrogate policy
gradient, optionally augmented by episodic hindsight self-imitation:
every collected episode is relabeled to the goal it actually achieved,
steps whose return improved are imitated, and the imitation weight
adapts to the fraction of steps selected.
"""

from ._kernels import BACKEND

__all__ = ["BACKEND"]
__version__ = "0.1.0"
