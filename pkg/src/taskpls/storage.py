"""On-disk formats for ensembles, templates and rasters.

Rasters are headerless little-endian float64 files in row-major order; their
dimensions live in an accompanying JSON document. PNG exports are for viewing
only and are never read back.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ManifestMismatchError, ShapeError
from .objects import LabeledEnsemble
from .observer import ObserverTemplate

FORMAT_VERSION = 1
_DTYPE = "<f8"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_raster(path, image) -> None:
    np.ascontiguousarray(image, dtype=_DTYPE).tofile(path)


def read_raster(path, shape) -> np.ndarray:
    data = np.fromfile(path, dtype=_DTYPE)
    if data.size != int(np.prod(shape)):
        raise ShapeError(f"{path}: expected {int(np.prod(shape))} values, found {data.size}")
    return data.astype(np.float64).reshape(shape)


def export_png(path, image, vmin=None, vmax=None) -> dict:
    """Write an 8-bit grayscale PNG with linear windowing; return the window."""
    image = np.asarray(image, dtype=np.float64)
    vmin = float(image.min()) if vmin is None else float(vmin)
    vmax = float(image.max()) if vmax is None else float(vmax)
    span = vmax - vmin if vmax > vmin else 1.0
    scaled = np.clip((image - vmin) / span, 0.0, 1.0)
    Image.fromarray(np.round(scaled * 255).astype(np.uint8), mode="L").save(path, optimize=False)
    return {"vmin": vmin, "vmax": vmax}


# -- ensembles -------------------------------------------------------------------

def _item_names(i):
    return f"noisy_{i:07d}.f64", f"truth_{i:07d}.f64"


def ensemble_content_hash(directory, manifest) -> str:
    """Hash over every raster of the ensemble in item order."""
    h = hashlib.sha256()
    directory = Path(directory)
    for item in manifest["items"]:
        for name in (item["noisy"], item["truth"]):
            h.update(bytes.fromhex(sha256_file(directory / name)))
    return h.hexdigest()


def save_ensemble(ensemble: LabeledEnsemble, directory) -> dict:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    prov = dict(ensemble.provenance)
    seeds = prov.pop("seeds", [None] * len(ensemble))
    items = []
    for i, (noisy, truth, label) in enumerate(ensemble.items):
        noisy_name, truth_name = _item_names(i)
        write_raster(directory / noisy_name, noisy)
        write_raster(directory / truth_name, truth)
        items.append({
            "index": i,
            "label": "H1" if label else "H0",
            "noisy": noisy_name,
            "truth": truth_name,
            "seeds": seeds[i],
        })
    manifest = {
        "format_version": FORMAT_VERSION,
        "height": int(ensemble.shape[0]),
        "width": int(ensemble.shape[1]),
        "dtype": "float64-le",
        "counts": {
            "H0": int(np.sum(ensemble.labels == 0)),
            "H1": int(np.sum(ensemble.labels == 1)),
        },
        "provenance": prov,
        "items": items,
    }
    manifest["content_sha256"] = ensemble_content_hash(directory, manifest)
    write_json(directory / "manifest.json", manifest)
    return manifest


def load_ensemble(directory, verify: bool = True) -> LabeledEnsemble:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    if verify:
        actual = ensemble_content_hash(directory, manifest)
        if actual != manifest["content_sha256"]:
            raise ManifestMismatchError(f"ensemble {directory} does not match its manifest hash")
    shape = (manifest["height"], manifest["width"])
    items = manifest["items"]
    noisy = np.empty((len(items),) + shape)
    truth = np.empty_like(noisy)
    for i, item in enumerate(items):
        noisy[i] = read_raster(directory / item["noisy"], shape)
        truth[i] = read_raster(directory / item["truth"], shape)
    labels = [1 if item["label"] == "H1" else 0 for item in items]
    prov = dict(manifest["provenance"])
    prov["seeds"] = [item["seeds"] for item in items]
    prov["content_sha256"] = manifest["content_sha256"]
    return LabeledEnsemble(noisy, truth, labels, prov)


# -- templates -------------------------------------------------------------------

def save_template(template: ObserverTemplate, path_stem) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (header) and ``<stem>.f64`` (the vector)."""
    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    vec_path = stem.with_suffix(".f64")
    write_raster(vec_path, template.w)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": template.kind,
        "height": template.shape[0] if template.shape else None,
        "width": template.shape[1] if template.shape else None,
        "length": int(template.w.size),
        "shrinkage": template.shrinkage,
        "training_meta": template.training_meta,
        "vector_file": vec_path.name,
        "vector_sha256": sha256_file(vec_path),
    }
    json_path = stem.with_suffix(".json")
    write_json(json_path, header)
    return json_path, vec_path


def load_template(json_path, verify: bool = True) -> ObserverTemplate:
    json_path = Path(json_path)
    header = read_json(json_path)
    vec_path = json_path.parent / header["vector_file"]
    if verify and sha256_file(vec_path) != header["vector_sha256"]:
        raise ManifestMismatchError(f"template vector {vec_path} does not match its header hash")
    w = read_raster(vec_path, (header["length"],))
    shape = None
    if header.get("height") is not None:
        shape = (header["height"], header["width"])
    return ObserverTemplate(w, header["kind"], header["shrinkage"], shape, header["training_meta"])


def output_root(default="runs") -> Path:
    return Path(os.environ.get("TASKPLS_OUTPUT_ROOT", default))
