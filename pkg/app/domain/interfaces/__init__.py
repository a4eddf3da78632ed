"""Abstract interfaces implemented by readers and models."""

from app.domain.interfaces.classifier import ProbabilisticClassifier
from app.domain.interfaces.sample_reader import SampleReader
