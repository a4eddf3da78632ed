"""
Seeding, hashing and digest helpers shared by every training stage.
"""

import hashlib
import json
import platform
import random
import subprocess
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import nn

from app.core.config import settings

_SEED_MODULUS = 2**31 - 1


def seed_everything(seed: int) -> None:
    """Seed python, NumPy and torch RNGs.

    Args:
        seed: Base seed
    """
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if settings.TORCH_THREADS is not None:
        torch.set_num_threads(settings.TORCH_THREADS)
    if settings.DETERMINISTIC:
        torch.use_deterministic_algorithms(True, warn_only=True)


def derive_seed(base: int, *keys: str | int) -> int:
    """Derive an independent seed from a base seed and a key path.

    Args:
        base: Base seed
        keys: Stream identifiers (stage name, fold, epoch, step, ...)

    Returns:
        Non-negative integer seed below 2**31 - 1
    """
    payload = ":".join([str(base), *(str(k) for k in keys)])
    digest = hashlib.sha256(payload.encode()).digest()
    return int.from_bytes(digest[:8], "big") % _SEED_MODULUS


def torch_generator(seed: int) -> torch.Generator:
    """Create a CPU torch generator seeded with ``seed``."""
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def config_hash(obj: Any) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _tensor_bytes(tensor: torch.Tensor) -> bytes:
    return tensor.detach().cpu().contiguous().numpy().tobytes()


def parameter_digests(module: nn.Module) -> dict[str, str]:
    """Per-parameter SHA-256 digests, keyed by parameter name."""
    return {
        name: hashlib.sha256(_tensor_bytes(param)).hexdigest()
        for name, param in module.named_parameters()
    }


def parameter_digest(module: nn.Module) -> str:
    """Single SHA-256 over every parameter and buffer in name order."""
    hasher = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        hasher.update(name.encode())
        hasher.update(_tensor_bytes(tensor))
    return hasher.hexdigest()


def state_dict_digest(state: dict[str, torch.Tensor], prefix: str = "") -> str:
    """Digest of a state dict restricted to keys starting with ``prefix``.

    The prefix is stripped before hashing so an encoder digest taken from an
    MAE checkpoint matches the digest of the same encoder inside a student.
    """
    hasher = hashlib.sha256()
    for name, tensor in sorted(state.items()):
        if not name.startswith(prefix):
            continue
        hasher.update(name[len(prefix) :].encode())
        hasher.update(_tensor_bytes(tensor))
    return hasher.hexdigest()


def git_revision(cwd: Path | None = None) -> str | None:
    """Current git revision, or None outside a work tree."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=cwd,
            capture_output=True,
            text=True,
            check=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None


def run_identifiers() -> dict[str, str | None]:
    """Build identifiers needed to reproduce a run."""
    from app import __version__

    return {
        "package_version": __version__,
        "git_revision": git_revision(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        "platform": platform.platform(),
    }
