"""
Eval-mode batched inference for the two-class classifiers.
"""

import torch
from torch import nn

from app.kd.training import device
from app.schemas.samples import ProbOutput


@torch.no_grad()
def predict_probabilities(model: nn.Module, inputs: torch.Tensor, batch_size: int = 16) -> torch.Tensor:
    """Softmax probabilities (N, 2) in float64, computed in eval mode.

    Batch-norm layers use running statistics, so the result for one input does
    not depend on the rest of its batch.
    """
    was_training = model.training
    model.eval()
    outputs = []
    for start in range(0, inputs.shape[0], batch_size):
        logits = model(inputs[start : start + batch_size].to(device()))
        outputs.append(torch.softmax(logits.double(), dim=-1).cpu())
    model.train(was_training)
    if not outputs:
        return torch.empty(0, 2, dtype=torch.float64)
    return torch.cat(outputs)


def to_prob_outputs(probs: torch.Tensor) -> list[ProbOutput]:
    """Wrap rows of a (N, 2) probability tensor."""
    return [ProbOutput(probs=(float(row[0]), float(row[1]))) for row in probs.tolist()]
