"""Desk-scale lab for fairness between cold and heavy users in news recommendation.

The package trains small attention-based recommenders from scratch on
synthetic or MIND-format click logs, tracks AUC per user-activity stratum
across training checkpoints, and measures how far the best-overall model
falls short of the best cold-user model. The self-distillation trainer
(behavior dropout on the student branch plus a KL consistency term) is the
intervention under study.
"""

__version__ = "0.1.0"
