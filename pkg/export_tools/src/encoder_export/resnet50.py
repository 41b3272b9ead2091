"""ResNet50 penultimate-feature export.

The classifier head is dropped entirely: the graph ends at the flattened
global-average-pooled features (width 2048). Spatial dims stay symbolic
because global pooling makes the feature width independent of input size.
"""

from __future__ import annotations

import numpy as np
import torch

from .onnx_writer import GraphWriter

INPUT_NAME = "pixel_values"
OUTPUT_NAME = "embedding"
ENCODER_ID = "resnet50-penultimate"
OUTPUT_DIM = 2048


def _to_f32(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().astype(np.float32)


class _ResNetEmitter:
    def __init__(self, writer: GraphWriter):
        self.w = writer

    def conv(self, tag: str, module: torch.nn.Conv2d, x: str) -> str:
        weight = self.w.initializer(f"{tag}.weight", _to_f32(module.weight))
        inputs = [x, weight]
        if module.bias is not None:
            inputs.append(self.w.initializer(f"{tag}.bias", _to_f32(module.bias)))
        pads = [int(module.padding[0]), int(module.padding[1])] * 2
        return self.w.add(
            "Conv", inputs,
            strides=[int(s) for s in module.stride],
            pads=pads,
        )

    def bn(self, tag: str, module: torch.nn.BatchNorm2d, x: str) -> str:
        names = [
            self.w.initializer(f"{tag}.scale", _to_f32(module.weight)),
            self.w.initializer(f"{tag}.bias", _to_f32(module.bias)),
            self.w.initializer(f"{tag}.mean", _to_f32(module.running_mean)),
            self.w.initializer(f"{tag}.var", _to_f32(module.running_var)),
        ]
        return self.w.add("BatchNormalization", [x, *names], epsilon=float(module.eps))

    def bottleneck(self, tag: str, block, x: str) -> str:
        out = self.w.add("Relu", [self.bn(f"{tag}.bn1", block.bn1, self.conv(f"{tag}.conv1", block.conv1, x))])
        out = self.w.add("Relu", [self.bn(f"{tag}.bn2", block.bn2, self.conv(f"{tag}.conv2", block.conv2, out))])
        out = self.bn(f"{tag}.bn3", block.bn3, self.conv(f"{tag}.conv3", block.conv3, out))
        identity = x
        if block.downsample is not None:
            identity = self.conv(f"{tag}.down.conv", block.downsample[0], x)
            identity = self.bn(f"{tag}.down.bn", block.downsample[1], identity)
        return self.w.add("Relu", [self.w.add("Add", [out, identity])])


def build_resnet50_graph(model: torch.nn.Module) -> bytes:
    """Serialize a torchvision ResNet50 (head removed) to ONNX bytes."""
    model = model.eval()
    writer = GraphWriter("resnet50_penultimate")
    emit = _ResNetEmitter(writer)
    writer.declare_input(INPUT_NAME, ("batch", 3, "height", "width"))

    x = emit.conv("stem.conv1", model.conv1, INPUT_NAME)
    x = emit.bn("stem.bn1", model.bn1, x)
    x = writer.add("Relu", [x])
    x = writer.add("MaxPool", [x], kernel_shape=[3, 3], strides=[2, 2], pads=[1, 1, 1, 1])
    for stage_idx, stage in enumerate((model.layer1, model.layer2, model.layer3, model.layer4), 1):
        for block_idx, block in enumerate(stage):
            x = emit.bottleneck(f"layer{stage_idx}.{block_idx}", block, x)
    x = writer.add("GlobalAveragePool", [x])
    writer.add("Flatten", [x], output=OUTPUT_NAME, axis=1)
    writer.declare_output(OUTPUT_NAME, ("batch", OUTPUT_DIM))
    return writer.tobytes()


def load_source_model(pretrained: bool, seed: int = 0) -> tuple[torch.nn.Module, str]:
    """The torch-side reference model plus its checkpoint label."""
    import torchvision

    if pretrained:
        weights = torchvision.models.ResNet50_Weights.IMAGENET1K_V2
        model = torchvision.models.resnet50(weights=weights)
        checkpoint = str(weights)
    else:
        torch.manual_seed(seed)
        model = torchvision.models.resnet50(weights=None)
        checkpoint = f"random-init(seed={seed})"
    model.fc = torch.nn.Identity()  # classification head removed
    return model.eval(), checkpoint
