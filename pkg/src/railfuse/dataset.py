"""
Dataset synthesis and on-disk persistence.

Layout of a dataset directory::

    manifest.json          taxonomy, layer, duration, provenance, scene records
    scenes/000000.fwt      one FWT1 tensor per scene

FWT1 binary tensor: magic ``b"FWT1"``, u32 rank, rank x u32 extents, then the
row-major float32 payload; all little-endian.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from railfuse.audio import AudioConfig, AudioEvent, synth_scene_events
from railfuse.errors import CorruptFileError
from railfuse.scene import (
    STREAM_AUDIO,
    BoundingBox,
    GroundTruth,
    LayerConfig,
    Scene,
    SceneGenConfig,
    Taxonomy,
    generate_scene,
    scene_rng,
)

MAGIC = b"FWT1"
MANIFEST = "manifest.json"
FORMAT_NAME = "railfuse-dataset"
FORMAT_VERSION = 1


def encode_fwt(array: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes(order="C")


def decode_fwt(buf: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise CorruptFileError(f"{source}: missing FWT1 magic")
    (rank,) = struct.unpack_from("<I", buf, 4)
    head = 8 + 4 * rank
    if len(buf) < head:
        raise CorruptFileError(f"{source}: truncated header")
    shape = struct.unpack_from(f"<{rank}I", buf, 8)
    count = int(np.prod(shape, dtype=np.int64)) if rank else 1
    if len(buf) != head + 4 * count:
        raise CorruptFileError(f"{source}: payload has {len(buf) - head} bytes, expected {4 * count}")
    return np.frombuffer(buf, dtype="<f4", offset=head).reshape(shape).astype(np.float32)


def write_fwt(path: Path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_fwt(array))


def read_fwt(path: Path) -> np.ndarray:
    return decode_fwt(Path(path).read_bytes(), str(path))


def generate_dataset(
    n_scenes: int,
    seed: int,
    scene_config: SceneGenConfig | None = None,
    audio_config: AudioConfig | None = None,
) -> list[Scene]:
    """Scenes with audio events; each scene uses its own (seed, id) RNG streams."""
    scene_config = scene_config or SceneGenConfig()
    audio_config = audio_config or AudioConfig()
    scenes = []
    for sid in range(n_scenes):
        scene = generate_scene(scene_config, seed, sid)
        scene.events = synth_scene_events(scene, audio_config, scene_rng(seed, sid, STREAM_AUDIO))
        scenes.append(scene)
    return scenes


def _scene_record(scene: Scene, tensor_name: str) -> dict[str, Any]:
    tax = scene.taxonomy
    return {
        "id": scene.scene_id,
        "tensor": tensor_name,
        "objects": [{"box": list(gt.box.as_tuple()), "label": tax.name(gt.label)} for gt in scene.objects],
        "events": [
            {
                "t_start": ev.t_start,
                "t_end": ev.t_end,
                "probs": list(ev.probs),
                "peak": ev.peak,
                "label": tax.name(ev.label),
            }
            for ev in scene.events
        ],
    }


def save_dataset(scenes: Iterable[Scene], path: str | Path, provenance: dict | None = None) -> Path:
    scenes = list(scenes)
    root = Path(path)
    (root / "scenes").mkdir(parents=True, exist_ok=True)
    if scenes:
        first = scenes[0]
        for s in scenes[1:]:
            if (s.layer, s.taxonomy, s.duration, s.image_width, s.image_height) != (
                first.layer, first.taxonomy, first.duration, first.image_width, first.image_height
            ):
                raise ValueError("all scenes in a dataset must share geometry and taxonomy")
    records = []
    for scene in scenes:
        name = f"scenes/{scene.scene_id:06d}.fwt"
        write_fwt(root / name, scene.features)
        records.append(_scene_record(scene, name))
    first = scenes[0] if scenes else None
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "taxonomy": list(first.taxonomy.names) if first else list(Taxonomy().names),
        "layer": asdict(first.layer) if first else None,
        "image": {"width": first.image_width, "height": first.image_height} if first else None,
        "duration": first.duration if first else None,
        "provenance": provenance or {},
        "scenes": records,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return root


def load_manifest(path: str | Path) -> dict:
    mpath = Path(path) / MANIFEST
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFileError(f"{mpath}: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT_NAME:
        raise CorruptFileError(f"{mpath}: not a {FORMAT_NAME} manifest")
    return manifest


def load_dataset(path: str | Path) -> list[Scene]:
    root = Path(path)
    manifest = load_manifest(root)
    try:
        taxonomy = Taxonomy(tuple(manifest["taxonomy"]))
        if not manifest["scenes"]:
            return []
        layer = LayerConfig(**manifest["layer"])
        width, height = manifest["image"]["width"], manifest["image"]["height"]
        duration = float(manifest["duration"])
        records = manifest["scenes"]
    except (KeyError, TypeError) as exc:
        raise CorruptFileError(f"malformed manifest: {exc!r}") from exc

    scenes = []
    for rec in records:
        features = read_fwt(root / rec["tensor"])
        expected = (layer.channels, layer.height, layer.width)
        if features.shape != expected:
            raise CorruptFileError(f"{rec['tensor']}: shape {features.shape} does not match layer {expected}")
        objects = [GroundTruth(BoundingBox(*o["box"]), taxonomy.index(o["label"])) for o in rec["objects"]]
        events = [
            AudioEvent(e["t_start"], e["t_end"], tuple(e["probs"]), e["peak"], taxonomy.index(e["label"]))
            for e in rec["events"]
        ]
        scenes.append(
            Scene(
                scene_id=int(rec["id"]),
                image_width=width,
                image_height=height,
                layer=layer,
                features=features,
                objects=objects,
                events=events,
                duration=duration,
                taxonomy=taxonomy,
            )
        )
    return scenes

