"""
Dataset manifests: a CSV table with columns ``id,path,label,modality``.

``label`` is ``negative``/``positive`` or empty for unlabeled pre-training
volumes; ``path`` is relative to the manifest's directory unless absolute.
"""

from pathlib import Path

import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.core.exceptions import ManifestError
from app.schemas.samples import ClassLabel, Modality

MANIFEST_COLUMNS = ["id", "path", "label", "modality"]


class ManifestEntry(BaseModel):
    """One manifest row."""

    model_config = ConfigDict(frozen=True)

    sample_id: str
    path: Path
    label: ClassLabel | None
    modality: Modality


def write_manifest(entries: list[ManifestEntry], path: Path) -> Path:
    """Write a manifest CSV; paths are stored relative to its directory."""
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for entry in entries:
        entry_path = entry.path
        if entry_path.is_absolute():
            try:
                entry_path = entry_path.relative_to(path.parent)
            except ValueError:
                pass
        rows.append(
            {
                "id": entry.sample_id,
                "path": entry_path.as_posix(),
                "label": entry.label.value if entry.label else "",
                "modality": entry.modality,
            }
        )
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(path, index=False, lineterminator="\n")
    return path


def read_manifest(path: Path) -> list[ManifestEntry]:
    """Read a manifest CSV.

    Raises:
        ManifestError: On missing columns, duplicate ids or bad labels
    """
    if not path.is_file():
        raise ManifestError(f"Manifest not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
    if missing:
        raise ManifestError(f"Manifest {path} lacks columns {missing}")
    if frame["id"].duplicated().any():
        dupes = frame.loc[frame["id"].duplicated(), "id"].tolist()
        raise ManifestError(f"Manifest {path} has duplicate ids", details={"ids": dupes})

    entries = []
    for row_number, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            label = ClassLabel(row.label) if row.label else None
            entry_path = Path(row.path)
            if not entry_path.is_absolute():
                entry_path = path.parent / entry_path
            entries.append(
                ManifestEntry(
                    sample_id=row.id,
                    path=entry_path,
                    label=label,
                    modality=row.modality,
                )
            )
        except ValueError as e:
            raise ManifestError(
                f"{path}:{row_number}: invalid manifest row: {e}",
                details={"line": row_number},
            ) from e
    return entries
