"""Toolkit for finding and verifying spurious token-label correlations in text classifiers.

The package combines three views of a trained classifier:

* feature attribution - which tokens of one input mattered,
* instance attribution - which training examples mattered for one prediction,
* training-feature attribution - which tokens *inside* those training
  examples carried the influence.

plus corpus-statistic baselines and controlled-edit verification, behind a
CLI and a small read-only HTTP service.
"""

from __future__ import annotations

__version__ = "0.1.0"
