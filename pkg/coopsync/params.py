"""
Parameter bundles for every learned component.

A bundle is created from a seed or loaded from disk. On disk it is a pair
of files:

    <name>.npz             one array per state-dict entry
    <name>.manifest.json   {"sha256": ..., "tensors": {name: shape}}

Loading verifies the checksum and every declared shape before any tensor
is copied into the modules.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from pathlib import Path
from typing import Union

import numpy as np
import torch
from torch import nn

from . import constants as const
from . import logger
from .attention import AttentionConfig, AttentionStack
from .exceptions import ParamsError
from .fusion import DetectionHead, FusionConv
from .offsets import OffsetGenerator
from .pillars import Backbone, PillarEncoder
from .temporal import TemporalFusion
from .trajfield import FieldPredictor
from .utils import seeded

MANIFEST_SUFFIX = ".manifest.json"


class ParamBundle(nn.Module):
    """All learned modules of one pipeline."""

    def __init__(
        self,
        channels: int = const.FEATURE_CHANNELS,
        agents: int = 2,
        history_frames: int = const.COOP_FRAMES,
        attention: AttentionConfig = AttentionConfig(),
    ) -> None:
        super().__init__()
        self.channels = channels
        self.agents = agents
        self.history_frames = history_frames
        self.encoder = PillarEncoder(channels)
        self.backbone = Backbone(channels, channels)
        self.temporal = TemporalFusion(channels)
        self.field = FieldPredictor(channels * history_frames)
        self.offsets = OffsetGenerator(channels)
        self.attention = AttentionStack(attention)
        self.fusion = FusionConv(channels, agents)
        self.head = DetectionHead(channels)

    @classmethod
    def seeded(cls, seed: int = 0, **kwargs: object) -> ParamBundle:
        """Default torch initialization under a fixed seed."""
        with seeded(seed):
            return cls(**kwargs)  # type: ignore[arg-type]

    @classmethod
    def oracle(cls, seed: int = 0, **kwargs: object) -> ParamBundle:
        """
        Parameters for the oracle pipeline.

        Temporal fusion passes features through, attention averages its
        response rows and fusion sums the agents.
        """
        bundle = cls.seeded(seed, **kwargs)
        bundle.temporal = TemporalFusion.identity(bundle.channels)
        bundle.attention = AttentionStack.uniform(bundle.channels)
        bundle.fusion = FusionConv.weighted([1.0] * bundle.agents, bundle.channels)
        return bundle

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.detach().cpu().numpy() for name, t in self.state_dict().items()}


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(path.stem + MANIFEST_SUFFIX)


def save_params(bundle: ParamBundle, path: Union[str, Path]) -> Path:
    """
    Write ``bundle`` to ``path`` (.npz) and its manifest next to it.

    Returns:
        Path of the tensor file
    """
    path = Path(path).with_suffix(".npz")
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = bundle.arrays()
    np.savez(path, **arrays)
    manifest = {
        "sha256": _sha256(path),
        "config": {
            "channels": bundle.channels,
            "agents": bundle.agents,
            "history_frames": bundle.history_frames,
        },
        "tensors": {name: list(a.shape) for name, a in arrays.items()},
    }
    manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    logger.debug(f"Saved {len(arrays)} tensors to {path}")
    return path


def load_params(path: Union[str, Path], attention: AttentionConfig = AttentionConfig()) -> ParamBundle:
    """
    Load a bundle written by :func:`save_params`.

    Raises:
        ParamsError: On a missing file, checksum mismatch, unknown or
            missing tensor, or a shape that differs from the module's
    """
    path = Path(path)
    mpath = manifest_path(path)
    for p in (path, mpath):
        if not p.exists():
            raise ParamsError("Parameter file not found", str(p))
    try:
        manifest = json.loads(mpath.read_text())
        config = {k: int(manifest["config"][k]) for k in ("channels", "agents", "history_frames")}
        declared = {k: tuple(v) for k, v in manifest["tensors"].items()}
        expected_sha = manifest["sha256"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ParamsError("Malformed manifest", f"{mpath}: {e}") from e

    actual_sha = _sha256(path)
    if actual_sha != expected_sha:
        raise ParamsError("Checksum mismatch", f"{path}: expected {expected_sha[:12]}, got {actual_sha[:12]}")

    bundle = ParamBundle(
        attention=replace(attention, channels=config["channels"]),
        **config,
    )
    state = bundle.state_dict()
    if set(declared) != set(state):
        missing = sorted(set(state) - set(declared))
        extra = sorted(set(declared) - set(state))
        raise ParamsError("Tensor names do not match the modules", f"missing={missing[:3]}, unexpected={extra[:3]}")

    with np.load(path) as data:
        loaded = {}
        for name, module_tensor in state.items():
            shape = tuple(module_tensor.shape)
            if declared[name] != shape or data[name].shape != shape:
                raise ParamsError(
                    "Tensor shape mismatch",
                    f"{name}: module {shape}, declared {declared[name]}, file {data[name].shape}",
                )
            loaded[name] = torch.from_numpy(np.array(data[name], dtype=np.float64))
    bundle.load_state_dict(loaded)
    logger.debug(f"Loaded {len(loaded)} tensors from {path}")
    return bundle
