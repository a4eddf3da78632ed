"""
Abstract interface for the two-class classifiers (teacher and student).
"""

from abc import ABC, abstractmethod

import torch


class ProbabilisticClassifier(ABC):
    """A network mapping a batch of inputs onto the 2-class simplex."""

    @abstractmethod
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Compute pre-softmax logits.

        Args:
            x: Batched input tensor

        Returns:
            Logits of shape (B, 2)
        """
        pass

    def predict_proba(self, x: torch.Tensor) -> torch.Tensor:
        """Softmax probabilities of shape (B, 2)."""
        return torch.softmax(self.forward(x), dim=-1)
