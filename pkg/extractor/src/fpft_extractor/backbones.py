"""Vision backbone registry.

Three embedding models: a residual network (2048-d), a vision
transformer (768-d), and a contrastive image encoder (512-d). Each entry
carries its preprocessing pipeline; the choices are recorded in the
extraction sidecar so runs are auditable. Weights download on first use;
`pretrained=False` builds the architecture with random weights, which is
enough for format and pipeline checks without network access.
"""

from dataclasses import dataclass

import torch
from torchvision import models, transforms

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


class BackboneError(Exception):
    """Unknown backbone or failure to obtain its weights."""


@dataclass(frozen=True)
class Backbone:
    name: str
    dim: int
    model: torch.nn.Module
    preprocess: object
    preprocess_note: str

    def embed(self, batch: torch.Tensor) -> torch.Tensor:
        return self.model(batch)


def _imagenet_preprocess():
    return transforms.Compose(
        [
            transforms.Resize(256),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(IMAGENET_MEAN, IMAGENET_STD),
        ]
    )


def _clip_preprocess():
    return transforms.Compose(
        [
            transforms.Resize(224, interpolation=transforms.InterpolationMode.BICUBIC),
            transforms.CenterCrop(224),
            transforms.ToTensor(),
            transforms.Normalize(CLIP_MEAN, CLIP_STD),
        ]
    )


def _build_resnet50(pretrained: bool) -> Backbone:
    weights = models.ResNet50_Weights.IMAGENET1K_V2 if pretrained else None
    try:
        model = models.resnet50(weights=weights)
    except Exception as exc:
        raise BackboneError(f"could not obtain resnet50 weights: {exc}") from exc
    model.fc = torch.nn.Identity()
    return Backbone(
        name="resnet50",
        dim=2048,
        model=model.eval(),
        preprocess=_imagenet_preprocess(),
        preprocess_note="resize shortest side to 256, center crop 224, "
        "scale to [0,1], normalize with ImageNet statistics",
    )


def _build_vit_b16(pretrained: bool) -> Backbone:
    weights = models.ViT_B_16_Weights.IMAGENET1K_V1 if pretrained else None
    try:
        model = models.vit_b_16(weights=weights)
    except Exception as exc:
        raise BackboneError(f"could not obtain vit_b16 weights: {exc}") from exc
    model.heads = torch.nn.Identity()
    return Backbone(
        name="vit_b16",
        dim=768,
        model=model.eval(),
        preprocess=_imagenet_preprocess(),
        preprocess_note="resize shortest side to 256, center crop 224, "
        "scale to [0,1], normalize with ImageNet statistics",
    )


class _ClipProjectionWrapper(torch.nn.Module):
    def __init__(self, inner):
        super().__init__()
        self.inner = inner

    def forward(self, batch):
        return self.inner(pixel_values=batch).image_embeds


def _build_clip_vit_b32(pretrained: bool) -> Backbone:
    try:
        from transformers import CLIPVisionConfig, CLIPVisionModelWithProjection
    except ImportError as exc:
        raise BackboneError(
            "the contrastive encoder needs the optional 'transformers' dependency"
        ) from exc
    try:
        if pretrained:
            inner = CLIPVisionModelWithProjection.from_pretrained(
                "openai/clip-vit-base-patch32"
            )
        else:
            inner = CLIPVisionModelWithProjection(CLIPVisionConfig())
    except Exception as exc:
        raise BackboneError(f"could not obtain clip_vit_b32 weights: {exc}") from exc
    return Backbone(
        name="clip_vit_b32",
        dim=512,
        model=_ClipProjectionWrapper(inner.eval()),
        preprocess=_clip_preprocess(),
        preprocess_note="resize shortest side to 224 (bicubic), center crop 224, "
        "scale to [0,1], normalize with the encoder's published statistics",
    )


_BUILDERS = {
    "resnet50": _build_resnet50,
    "vit_b16": _build_vit_b16,
    "clip_vit_b32": _build_clip_vit_b32,
}

BACKBONE_DIMS = {"resnet50": 2048, "vit_b16": 768, "clip_vit_b32": 512}


def load_backbone(name: str, pretrained: bool = True) -> Backbone:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise BackboneError(
            f"unknown backbone {name!r}; choose one of {sorted(_BUILDERS)}"
        ) from None
    if pretrained:
        backbone = builder(True)
    else:
        # random-weight mode is a reproducible fixture: seed the
        # initialization so repeated loads embed identically
        with torch.random.fork_rng():
            torch.manual_seed(0)
            backbone = builder(False)
    if backbone.dim != BACKBONE_DIMS[name]:
        raise BackboneError(f"{name} produced width {backbone.dim}, declared {BACKBONE_DIMS[name]}")
    return backbone
