"""Desk-scale two-phase unsupervised skill discovery lab.

Phase 1 trains a goal-conditioned low-level policy (the linearizer) with an
inner-product reward; phase 2 discovers continuous skills with an
information-bottleneck objective over a sampling policy, a trajectory
encoder and a skill policy.  Everything is seeded, float64 and CPU-only.
"""

__version__ = "0.1.0"
