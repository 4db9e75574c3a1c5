"""End-to-end pipeline for longitudinal MS performance-outcome-measure data.

Stages: synthetic cohort generation / CSV ingestion -> common subject
representation -> label creation -> featurization -> model training ->
fold- and subgroup-aware evaluation. The ``msprog`` CLI drives the stages
through files; see the README for the stage contracts.
"""

__version__ = "0.1.0"
