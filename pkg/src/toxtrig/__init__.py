"""Detect and explain toxicity triggers in threaded comment corpora.

A toxicity trigger is a non-toxic comment that draws at least ``n`` toxic
replies.  The package ingests NDJSON comment dumps, scores toxicity through
pluggable back ends, labels triggers, trains an n-gram logistic-regression
trigger classifier, explains it with Shapley values, and compares trigger
vocabularies across communities.
"""

__version__ = "0.1.0"

PIPELINE_VERSION = __version__
