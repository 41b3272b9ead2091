"""CLIP ViT-B/32 visual-tower export.

Only the visual encoder plus the image projection is serialized (no text
tower: the graph has exactly one input). The output is the 512-wide image
embedding. Input is pinned to 224x224; the attention scale factor is
folded into the query projection weights.
"""

from __future__ import annotations

import numpy as np
import torch

from .onnx_writer import GraphWriter

INPUT_NAME = "pixel_values"
OUTPUT_NAME = "embedding"
ENCODER_ID = "clip-vit-b32-visual"
OUTPUT_DIM = 512
IMAGE_SIZE = 224
CHECKPOINT = "openai/clip-vit-base-patch32"
QUICK_GELU_SLOPE = 1.702


def _to_f32(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().astype(np.float32)


class _ClipEmitter:
    def __init__(self, writer: GraphWriter):
        self.w = writer

    def linear(self, tag: str, module: torch.nn.Linear, x: str, scale: float = 1.0) -> str:
        weight = _to_f32(module.weight).T * np.float32(scale)  # [in, out] for MatMul
        out = self.w.add("MatMul", [x, self.w.initializer(f"{tag}.weight", weight)])
        if module.bias is not None:
            bias = _to_f32(module.bias) * np.float32(scale)
            out = self.w.add("Add", [out, self.w.initializer(f"{tag}.bias", bias)])
        return out

    def layer_norm(self, tag: str, module: torch.nn.LayerNorm, x: str) -> str:
        return self.w.add(
            "LayerNormalization",
            [
                x,
                self.w.initializer(f"{tag}.scale", _to_f32(module.weight)),
                self.w.initializer(f"{tag}.bias", _to_f32(module.bias)),
            ],
            axis=-1,
            epsilon=float(module.eps),
        )

    def quick_gelu(self, x: str) -> str:
        slope = self.w.initializer(self.w.fresh("qgelu_slope"), np.float32(QUICK_GELU_SLOPE))
        return self.w.add("Mul", [x, self.w.add("Sigmoid", [self.w.add("Mul", [x, slope])])])

    def heads_split(self, tag: str, x: str, n_heads: int, head_dim: int, transpose_kv: bool) -> str:
        shape = self.w.initializer(
            f"{tag}.split_shape", np.asarray([0, 0, n_heads, head_dim], dtype=np.int64)
        )
        reshaped = self.w.add("Reshape", [x, shape])
        perm = [0, 2, 3, 1] if transpose_kv else [0, 2, 1, 3]
        return self.w.add("Transpose", [reshaped], perm=perm)

    def attention(self, tag: str, attn, x: str, n_tokens: int) -> str:
        embed_dim = attn.q_proj.weight.shape[0]
        n_heads = getattr(attn, "num_heads", None) or attn.config.num_attention_heads
        head_dim = embed_dim // n_heads
        scale = float(head_dim) ** -0.5  # folded into the query projection
        q = self.heads_split(f"{tag}.q", self.linear(f"{tag}.q_proj", attn.q_proj, x, scale),
                             n_heads, head_dim, transpose_kv=False)
        k = self.heads_split(f"{tag}.k", self.linear(f"{tag}.k_proj", attn.k_proj, x),
                             n_heads, head_dim, transpose_kv=True)
        v = self.heads_split(f"{tag}.v", self.linear(f"{tag}.v_proj", attn.v_proj, x),
                             n_heads, head_dim, transpose_kv=False)
        weights = self.w.add("Softmax", [self.w.add("MatMul", [q, k])], axis=-1)
        context = self.w.add("MatMul", [weights, v])
        merged = self.w.add("Transpose", [context], perm=[0, 2, 1, 3])
        merge_shape = self.w.initializer(
            f"{tag}.merge_shape", np.asarray([0, n_tokens, embed_dim], dtype=np.int64)
        )
        flat = self.w.add("Reshape", [merged, merge_shape])
        return self.linear(f"{tag}.out_proj", attn.out_proj, flat)


def build_clip_visual_graph(model: torch.nn.Module) -> bytes:
    """Serialize a CLIP vision tower (with projection) to ONNX bytes."""
    model = model.eval()
    vision = model.vision_model
    config = model.config
    if config.image_size != IMAGE_SIZE:
        raise ValueError(
            f"visual tower must take {IMAGE_SIZE}x{IMAGE_SIZE} inputs, "
            f"config says {config.image_size}"
        )
    n_patches = (config.image_size // config.patch_size) ** 2
    n_tokens = n_patches + 1
    embed_dim = config.hidden_size

    writer = GraphWriter("clip_vit_b32_visual")
    emit = _ClipEmitter(writer)
    writer.declare_input(INPUT_NAME, ("batch", 3, IMAGE_SIZE, IMAGE_SIZE))

    # patch embedding: conv (no bias) then tokens-last layout
    patch_w = writer.initializer(
        "embeddings.patch.weight", _to_f32(vision.embeddings.patch_embedding.weight)
    )
    patches = writer.add(
        "Conv", [INPUT_NAME, patch_w],
        strides=[config.patch_size, config.patch_size], pads=[0, 0, 0, 0],
    )
    flat_shape = writer.initializer(
        "embeddings.flatten_shape", np.asarray([0, embed_dim, -1], dtype=np.int64)
    )
    patches = writer.add("Reshape", [patches, flat_shape])
    patches = writer.add("Transpose", [patches], perm=[0, 2, 1])

    # class token expanded over the dynamic batch dimension
    cls = writer.initializer(
        "embeddings.class_token",
        _to_f32(vision.embeddings.class_embedding).reshape(1, 1, embed_dim),
    )
    shape_of_input = writer.add("Shape", [INPUT_NAME])
    batch_scalar = writer.add(
        "Gather", [shape_of_input, writer.initializer("c.zero", np.asarray(0, dtype=np.int64))],
        axis=0,
    )
    batch_vec = writer.add(
        "Unsqueeze", [batch_scalar, writer.initializer("c.axes0", np.asarray([0], dtype=np.int64))]
    )
    target = writer.add(
        "Concat",
        [
            batch_vec,
            writer.initializer("c.one", np.asarray([1], dtype=np.int64)),
            writer.initializer("c.width", np.asarray([embed_dim], dtype=np.int64)),
        ],
        axis=0,
    )
    cls_batch = writer.add("Expand", [cls, target])
    tokens = writer.add("Concat", [cls_batch, patches], axis=1)

    position = writer.initializer(
        "embeddings.positions", _to_f32(vision.embeddings.position_embedding.weight)
    )
    x = writer.add("Add", [tokens, position])
    x = emit.layer_norm("pre_layernorm", vision.pre_layrnorm, x)

    for i, layer in enumerate(vision.encoder.layers):
        tag = f"layers.{i}"
        attn_in = emit.layer_norm(f"{tag}.ln1", layer.layer_norm1, x)
        x = writer.add("Add", [x, emit.attention(f"{tag}.attn", layer.self_attn, attn_in, n_tokens)])
        mlp_in = emit.layer_norm(f"{tag}.ln2", layer.layer_norm2, x)
        hidden = emit.quick_gelu(emit.linear(f"{tag}.fc1", layer.mlp.fc1, mlp_in))
        x = writer.add("Add", [x, emit.linear(f"{tag}.fc2", layer.mlp.fc2, hidden)])

    pooled = writer.add(
        "Gather", [x, writer.initializer("c.token0", np.asarray(0, dtype=np.int64))], axis=1
    )
    pooled = emit.layer_norm("post_layernorm", vision.post_layernorm, pooled)
    projection = writer.initializer(
        "visual_projection.weight", _to_f32(model.visual_projection.weight).T
    )
    writer.add("MatMul", [pooled, projection], output=OUTPUT_NAME)
    writer.declare_output(OUTPUT_NAME, ("batch", OUTPUT_DIM))
    return writer.tobytes()


def load_source_model(pretrained: bool, seed: int = 0) -> tuple[torch.nn.Module, str]:
    from transformers import CLIPVisionConfig, CLIPVisionModelWithProjection

    if pretrained:
        model = CLIPVisionModelWithProjection.from_pretrained(CHECKPOINT)
        checkpoint = CHECKPOINT
    else:
        torch.manual_seed(seed)
        model = CLIPVisionModelWithProjection(CLIPVisionConfig())
        checkpoint = f"random-init(seed={seed})"
    return model.eval(), checkpoint
