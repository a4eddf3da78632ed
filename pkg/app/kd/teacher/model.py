"""
R(2+1)D residual video classifier built from torchvision's video ResNet.
"""

from functools import partial
from pathlib import Path

import torch
from torch import nn
from torchvision.models.video.resnet import BasicBlock, Conv2Plus1D, VideoResNet

from app.core.exceptions import CheckpointNotFoundError, ConfigurationError
from app.core.logging import get_logger
from app.domain.interfaces.classifier import ProbabilisticClassifier
from app.schemas.architecture import TeacherConfig

logger = get_logger(__name__)

KINETICS_SOURCE = "kinetics400"


class R2Plus1dStem(nn.Sequential):
    """Factorised stem with a configurable number of input channels."""

    def __init__(self, in_channels: int = 1) -> None:
        super().__init__(
            nn.Conv3d(
                in_channels,
                45,
                kernel_size=(1, 7, 7),
                stride=(1, 2, 2),
                padding=(0, 3, 3),
                bias=False,
            ),
            nn.BatchNorm3d(45),
            nn.ReLU(inplace=True),
            nn.Conv3d(45, 64, kernel_size=(3, 1, 1), stride=(1, 1, 1), padding=(1, 0, 0), bias=False),
            nn.BatchNorm3d(64),
            nn.ReLU(inplace=True),
        )


class TeacherNetwork(nn.Module, ProbabilisticClassifier):
    """Clip classifier: (2+1)D residual stages, global pooling, 512 -> 2 head.

    Inputs are (B, C, T, H, W).
    """

    def __init__(self, config: TeacherConfig):
        super().__init__()
        self.config = config
        self.backbone = VideoResNet(
            block=BasicBlock,
            conv_makers=[Conv2Plus1D] * 4,
            layers=list(config.layers),
            stem=partial(R2Plus1dStem, config.in_channels),
            num_classes=config.num_classes,
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.backbone(x)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Pooled 512-wide feature fed to the classification layer."""
        net = self.backbone
        x = net.stem(x)
        x = net.layer4(net.layer3(net.layer2(net.layer1(x))))
        return net.avgpool(x).flatten(1)


def build_teacher(config: TeacherConfig) -> TeacherNetwork:
    """Construct a randomly initialised teacher."""
    return TeacherNetwork(config)


def _external_state(source: str) -> dict[str, torch.Tensor]:
    if source == KINETICS_SOURCE:
        from torchvision.models.video import R2Plus1D_18_Weights, r2plus1d_18

        return r2plus1d_18(weights=R2Plus1D_18_Weights.KINETICS400_V1).state_dict()
    path = Path(source).expanduser()
    if not path.is_file():
        raise CheckpointNotFoundError(f"External teacher weights not found: {path}")
    state = torch.load(path, map_location="cpu", weights_only=True)
    return state.get("state_dict", state) if isinstance(state, dict) else state


def import_backbone_weights(model: TeacherNetwork, source: str) -> list[str]:
    """Load externally pre-trained R(2+1)D weights into ``model``.

    Stem kernels with more input channels than the model are summed over the
    channel axis. Tensors whose shapes still disagree (typically the
    classification layer) are skipped.

    Args:
        model: Teacher to initialise in place
        source: ``"kinetics400"`` or a path to a state dict

    Returns:
        Names of the parameters left at their random initialisation

    Raises:
        ConfigurationError: If Kinetics weights are requested for a non-18-layer teacher
    """
    if source == KINETICS_SOURCE and model.config.depth != 18:
        raise ConfigurationError("Kinetics-400 weights exist only for the 18-layer teacher")
    external = _external_state(source)
    target = model.backbone.state_dict()

    compatible: dict[str, torch.Tensor] = {}
    for name, tensor in external.items():
        name = name.removeprefix("backbone.")
        if name not in target:
            continue
        wanted = target[name].shape
        if tensor.ndim == 5 and tensor.shape[1] != wanted[1] and wanted[1] == 1:
            tensor = tensor.sum(dim=1, keepdim=True)
        if tensor.shape == wanted:
            compatible[name] = tensor

    model.backbone.load_state_dict(compatible, strict=False)
    skipped = sorted(set(target) - set(compatible))
    logger.info(
        "teacher_weights_imported",
        source=source,
        loaded=len(compatible),
        skipped=len(skipped),
    )
    return skipped
