"""Communication-graph pipeline: Stack Exchange dumps in, unresolved-question
classifiers and evaluation reports out."""

__version__ = "0.1.0"
