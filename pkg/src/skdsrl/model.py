"""Siamese model: shared encoder, classifier head, projector, predictor.

Clips enter as (T, H, W, C) numpy arrays and are converted to NCTHW tensors.
The two branches share every parameter; `siamese_forward` is literally two
calls of the same submodules.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .exceptions import CheckpointError, ShapeError

CHECKPOINT_VERSION = 1

ARCH_DEFAULTS = {
    # arch: (repr_dim, proj_dim, pred_hidden)
    "toy3d": (128, 128, 32),
    "resnet3d-18": (512, 512, 128),
    "resnet3d-50": (2048, 2048, 512),
}


@dataclass(frozen=True)
class ModelSpec:
    encoder_arch: str = "toy3d"
    num_classes: int = 4
    repr_dim: int = 128
    proj_dim: int = 128
    pred_hidden: int = 32

    def __post_init__(self):
        if self.encoder_arch not in ARCH_DEFAULTS:
            raise ValueError(f"unsupported encoder arch: {self.encoder_arch!r}")
        if self.pred_hidden >= self.proj_dim:
            raise ValueError("predictor hidden width must be a bottleneck (< proj_dim)")

    @classmethod
    def for_arch(cls, arch: str, num_classes: int) -> "ModelSpec":
        d, proj, hidden = ARCH_DEFAULTS[arch]
        return cls(
            encoder_arch=arch,
            num_classes=num_classes,
            repr_dim=d,
            proj_dim=proj,
            pred_hidden=hidden,
        )


@dataclass
class BranchOutputs:
    """Batched forward results of the two-view Siamese pass."""

    r1: torch.Tensor
    r2: torch.Tensor
    p1: torch.Tensor
    p2: torch.Tensor
    z1: torch.Tensor
    z2: torch.Tensor
    v1: torch.Tensor
    v2: torch.Tensor


def _conv_block(c_in: int, c_out: int, stride) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv3d(c_in, c_out, kernel_size=3, stride=stride, padding=1, bias=False),
        nn.BatchNorm3d(c_out),
        nn.ReLU(inplace=True),
    )


class Toy3DEncoder(nn.Module):
    """Small 3D conv stack for CPU-scale experiments; ~0.3M parameters."""

    def __init__(self, repr_dim: int = 128):
        super().__init__()
        widths = [16, 32, 64, repr_dim]
        # aggressive early downsampling keeps CPU training in the minutes range
        self.block1 = _conv_block(3, widths[0], stride=(2, 4, 4))
        self.block2 = _conv_block(widths[0], widths[1], stride=(2, 2, 2))
        self.block3 = _conv_block(widths[1], widths[2], stride=(2, 2, 2))
        self.block4 = _conv_block(widths[2], widths[3], stride=(2, 2, 2))
        self.gap = nn.AdaptiveAvgPool3d(1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.block4(self.block3(self.block2(self.block1(x))))
        return self.gap(x).flatten(1)


class BasicBlock3D(nn.Module):
    expansion = 1

    def __init__(self, c_in: int, planes: int, stride=1, downsample=None):
        super().__init__()
        self.conv1 = nn.Conv3d(c_in, planes, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(planes)
        self.conv2 = nn.Conv3d(planes, planes, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(planes)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class Bottleneck3D(nn.Module):
    expansion = 4

    def __init__(self, c_in: int, planes: int, stride=1, downsample=None):
        super().__init__()
        self.conv1 = nn.Conv3d(c_in, planes, 1, bias=False)
        self.bn1 = nn.BatchNorm3d(planes)
        self.conv2 = nn.Conv3d(planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(planes)
        self.conv3 = nn.Conv3d(planes, planes * 4, 1, bias=False)
        self.bn3 = nn.BatchNorm3d(planes * 4)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = downsample

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + identity)


class ResNet3D(nn.Module):
    """3D ResNet for video clips (18: basic blocks [2,2,2,2]; 50: bottleneck [3,4,6,3])."""

    def __init__(self, block, layers: list[int]):
        super().__init__()
        self.inplanes = 64
        self.conv1 = nn.Conv3d(3, 64, kernel_size=7, stride=(1, 2, 2), padding=3, bias=False)
        self.bn1 = nn.BatchNorm3d(64)
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool3d(kernel_size=3, stride=2, padding=1)
        self.layer1 = self._make_layer(block, 64, layers[0], stride=1)
        self.layer2 = self._make_layer(block, 128, layers[1], stride=2)
        self.layer3 = self._make_layer(block, 256, layers[2], stride=2)
        self.layer4 = self._make_layer(block, 512, layers[3], stride=2)
        self.gap = nn.AdaptiveAvgPool3d(1)

    def _make_layer(self, block, planes: int, count: int, stride: int) -> nn.Sequential:
        downsample = None
        if stride != 1 or self.inplanes != planes * block.expansion:
            downsample = nn.Sequential(
                nn.Conv3d(self.inplanes, planes * block.expansion, 1, stride=stride, bias=False),
                nn.BatchNorm3d(planes * block.expansion),
            )
        blocks = [block(self.inplanes, planes, stride, downsample)]
        self.inplanes = planes * block.expansion
        blocks += [block(self.inplanes, planes) for _ in range(count - 1)]
        return nn.Sequential(*blocks)

    def forward(self, x):
        x = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        x = self.layer4(self.layer3(self.layer2(self.layer1(x))))
        return self.gap(x).flatten(1)


def _build_encoder(spec: ModelSpec) -> nn.Module:
    if spec.encoder_arch == "toy3d":
        return Toy3DEncoder(spec.repr_dim)
    if spec.encoder_arch == "resnet3d-18":
        return ResNet3D(BasicBlock3D, [2, 2, 2, 2])
    return ResNet3D(Bottleneck3D, [3, 4, 6, 3])


class SKDModel(nn.Module):
    """Encoder + classifier + projector + predictor with one shared weight set."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.encoder = _build_encoder(spec)
        self.fc = nn.Linear(spec.repr_dim, spec.num_classes)
        self.projector = nn.Linear(spec.repr_dim, spec.proj_dim)
        self.predictor = nn.Sequential(
            nn.Linear(spec.proj_dim, spec.pred_hidden),
            nn.BatchNorm1d(spec.pred_hidden),
            nn.ReLU(inplace=True),
            nn.Linear(spec.pred_hidden, spec.proj_dim),
        )

    def _check_input(self, x: torch.Tensor) -> None:
        if x.ndim != 5 or x.shape[1] != 3:
            raise ShapeError(f"expected NCTHW clip batch with 3 channels, got {tuple(x.shape)}")

    def forward_branch(self, x: torch.Tensor):
        self._check_input(x)
        r = self.encoder(x)
        p = self.fc(r)
        z = self.projector(r)
        v = self.predictor(z)
        return r, p, z, v

    def siamese_forward(self, x1: torch.Tensor, x2: torch.Tensor) -> BranchOutputs:
        r1, p1, z1, v1 = self.forward_branch(x1)
        r2, p2, z2, v2 = self.forward_branch(x2)
        return BranchOutputs(r1=r1, r2=r2, p1=p1, p2=p2, z1=z1, z2=z2, v1=v1, v2=v2)


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, (nn.Conv3d, nn.Linear)):
        nn.init.kaiming_uniform_(module.weight, nonlinearity="relu")
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm3d, nn.BatchNorm1d)):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def build_model(spec: ModelSpec, seed: int) -> SKDModel:
    """Construct and deterministically initialize the full model."""
    torch.manual_seed(seed)
    model = SKDModel(spec)
    model.apply(_init_weights)
    return model


def clips_to_tensor(clips: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(N, T, H, W, C) numpy -> (N, C, T, H, W) torch."""
    if clips.ndim == 4:
        clips = clips[None]
    return torch.from_numpy(np.ascontiguousarray(clips.transpose(0, 4, 1, 2, 3))).to(dtype)


def no_decay_param_names(model: SKDModel) -> set[str]:
    """Names of BatchNorm scale/shift parameters (excluded from weight decay)."""
    names = set()
    for mod_name, module in model.named_modules():
        if isinstance(module, (nn.BatchNorm1d, nn.BatchNorm2d, nn.BatchNorm3d)):
            for p_name, _ in module.named_parameters(recurse=False):
                names.add(f"{mod_name}.{p_name}" if mod_name else p_name)
    return names


def save_model_checkpoint(model: SKDModel, path, seed: int | None = None, extra: dict | None = None) -> None:
    """Named-array (.npz) checkpoint: every parameter and BN running stat."""
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": asdict(model.spec),
        "seed": seed,
    }
    if extra:
        meta.update(extra)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def _read_npz(path):
    import zipfile
    import zlib

    try:
        data = np.load(path, allow_pickle=False)
        # force eager reads so truncation is detected here, not mid-restore
        return {k: data[k] for k in data.files}
    except (OSError, ValueError, EOFError, KeyError, zipfile.BadZipFile, zlib.error) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc


def load_model_checkpoint(path) -> tuple[SKDModel, dict]:
    data = _read_npz(path)
    if "__meta__" not in data:
        raise CheckpointError(f"checkpoint {path} has no metadata record")
    meta = json.loads(bytes(data["__meta__"]).decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"incompatible checkpoint version {meta.get('version')} (expected {CHECKPOINT_VERSION})"
        )
    spec = ModelSpec(**meta["spec"])
    model = SKDModel(spec)
    state = {k: torch.from_numpy(data[k]) for k in data if k != "__meta__"}
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint {path} does not match spec: {exc}") from exc
    return model, meta
