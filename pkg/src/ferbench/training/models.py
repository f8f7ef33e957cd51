"""Architecture registry. Every backbone takes single-channel 224x224 input."""

from __future__ import annotations

from typing import Callable

import torch
from torch import nn

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ChannelAdapter(nn.Module):
    """Replicate a grayscale batch to the backbone's channel count and normalize."""

    def __init__(self, backbone: nn.Module, in_channels: int, mean, std):
        super().__init__()
        self.backbone = backbone
        self.in_channels = in_channels
        self.register_buffer("mean", torch.tensor(mean[:in_channels]).view(1, -1, 1, 1))
        self.register_buffer("std", torch.tensor(std[:in_channels]).view(1, -1, 1, 1))

    def forward(self, x):
        if x.shape[1] == 1 and self.in_channels > 1:
            x = x.expand(-1, self.in_channels, -1, -1)
        return self.backbone((x - self.mean) / self.std)


class TinyNet(nn.Module):
    """Four conv blocks; small enough to train on a laptop CPU."""

    def __init__(self, num_classes: int, width: int = 16):
        super().__init__()

        def block(cin, cout, stride):
            return nn.Sequential(
                nn.Conv2d(cin, cout, 3, stride=stride, padding=1, bias=False),
                nn.BatchNorm2d(cout),
                nn.ReLU(inplace=True),
            )

        self.features = nn.Sequential(
            nn.AvgPool2d(4),  # 224 -> 56
            block(1, width, 1),
            nn.MaxPool2d(2),  # 28
            block(width, 2 * width, 1),
            nn.MaxPool2d(2),  # 14
            block(2 * width, 4 * width, 1),
            nn.MaxPool2d(2),  # 7
            block(4 * width, 4 * width, 1),
            nn.AdaptiveMaxPool2d(1),
            nn.Flatten(),
        )
        self.head = nn.Linear(4 * width, num_classes)

    def forward(self, x):
        return self.head(self.features(x))


def _tiny(num_classes: int, pretrained: bool) -> nn.Module:
    return ChannelAdapter(TinyNet(num_classes), 1, (0.5,), (0.25,))


def _torchvision(name: str, head_attr: Callable[[nn.Module], tuple[nn.Module, str]]):
    def build(num_classes: int, pretrained: bool) -> nn.Module:
        import torchvision.models as tvm

        model = tvm.get_model(name, weights="DEFAULT" if pretrained else None)
        parent, attr = head_attr(model)
        old = getattr(parent, attr)
        setattr(parent, attr, nn.Linear(old.in_features, num_classes))
        return ChannelAdapter(model, 3, IMAGENET_MEAN, IMAGENET_STD)

    return build


ARCHITECTURES: dict[str, Callable[[int, bool], nn.Module]] = {
    "tiny": _tiny,
    "swin_t": _torchvision("swin_t", lambda m: (m, "head")),
    "convnext_tiny": _torchvision("convnext_tiny", lambda m: (m.classifier, "2")),
}


def register_architecture(arch_id: str, builder: Callable[[int, bool], nn.Module]) -> None:
    ARCHITECTURES[arch_id] = builder


def build_model(arch_id: str, num_classes: int, pretrained: bool = False) -> nn.Module:
    try:
        builder = ARCHITECTURES[arch_id]
    except KeyError:
        raise KeyError(f"unknown architecture {arch_id!r}; known: {sorted(ARCHITECTURES)}") from None
    return builder(num_classes, pretrained)
