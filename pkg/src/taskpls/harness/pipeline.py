"""Experiment stages: generate, template, sweep, render.

Every stage reads and updates ``manifest.json`` in the run directory. The
manifest records the config snapshot, per-stage seeds, and a sha256 for each
artifact; a stage verifies the hashes of everything it consumes before it
starts.
"""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import storage
from ..denoiser import DenoiseConfig, denoise_batch
from ..errors import InvalidParameterError, ManifestMismatchError
from ..evaluation import difference_map, rmse, roc_curve, score_ensemble
from ..objects import H1, LabeledEnsemble, derive_seed, make_ensemble
from ..observer import ObserverTemplate, estimate_hotelling
from .config import ExperimentConfig, resolve_output_dir

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
RESULTS_HEADER = ["alpha", "beta", "gamma", "auc", "auc_std_err", "mean_rmse", "runtime_s"]


# -- manifest --------------------------------------------------------------------

class RunManifest:
    def __init__(self, run_dir, data=None):
        self.run_dir = Path(run_dir)
        self.data = data or {
            "format_version": storage.FORMAT_VERSION,
            "config": None,
            "seeds": {},
            "artifacts": {},
            "timing": {},
            "windows": {},
        }

    @classmethod
    def load(cls, run_dir) -> "RunManifest":
        path = Path(run_dir) / MANIFEST
        if not path.exists():
            return cls(run_dir)
        return cls(run_dir, storage.read_json(path))

    def save(self) -> None:
        storage.write_json(self.run_dir / MANIFEST, self.data)

    def record(self, path) -> str:
        path = Path(path)
        rel = str(path.resolve().relative_to(self.run_dir.resolve()))
        digest = storage.sha256_file(path)
        self.data["artifacts"][rel] = digest
        return digest

    def verify(self, path) -> None:
        """Check ``path`` against its recorded hash, if it is a tracked artifact."""
        path = Path(path)
        try:
            rel = str(path.resolve().relative_to(self.run_dir.resolve()))
        except ValueError:
            return
        expected = self.data["artifacts"].get(rel)
        if expected is None:
            return
        if storage.sha256_file(path) != expected:
            raise ManifestMismatchError(f"{rel} changed since it was recorded in {MANIFEST}")

    def verify_all(self) -> None:
        for rel, expected in self.data["artifacts"].items():
            path = self.run_dir / rel
            if not path.exists():
                raise ManifestMismatchError(f"artifact {rel} listed in {MANIFEST} is missing")
            if storage.sha256_file(path) != expected:
                raise ManifestMismatchError(f"artifact {rel} does not match its recorded hash")

    def forget(self, prefix: str) -> None:
        arts = self.data["artifacts"]
        for rel in [r for r in arts if r.startswith(prefix)]:
            del arts[rel]


def _open_run(cfg: ExperimentConfig) -> tuple[Path, RunManifest]:
    run_dir = resolve_output_dir(cfg)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidParameterError(f"cannot create output directory {run_dir}: {exc}") from exc
    manifest = RunManifest.load(run_dir)
    manifest.data["config"] = cfg.to_dict()
    return run_dir, manifest


def _load_verified_ensemble(manifest: RunManifest, directory) -> LabeledEnsemble:
    directory = Path(directory)
    manifest.verify(directory / "manifest.json")
    return storage.load_ensemble(directory, verify=True)


def _load_verified_template(manifest: RunManifest, path) -> ObserverTemplate:
    path = Path(path)
    manifest.verify(path)
    manifest.verify(path.with_suffix(".f64"))
    return storage.load_template(path, verify=True)


# -- stages ----------------------------------------------------------------------

def cmd_generate(cfg: ExperimentConfig) -> Path:
    """Write the template-training and test ensembles of a run."""
    t0 = time.perf_counter()
    run_dir, manifest = _open_run(cfg)
    seeds = {
        "train": derive_seed(cfg.master_seed, 0, "train"),
        "test": derive_seed(cfg.master_seed, 0, "test"),
    }
    for split, n0, n1 in (
        ("train", cfg.n_train_absent, cfg.n_train_present),
        ("test", cfg.n_test_absent, cfg.n_test_present),
    ):
        ens = make_ensemble(cfg.background, cfg.signal, cfg.noise, n0, n1, seeds[split])
        directory = run_dir / split
        manifest.forget(f"{split}/")
        storage.save_ensemble(ens, directory)
        manifest.record(directory / "manifest.json")
        log.info("wrote %s ensemble (%d + %d items) to %s", split, n0, n1, directory)
    manifest.data["seeds"].update(seeds)
    manifest.data["timing"]["generate_s"] = time.perf_counter() - t0
    manifest.save()
    return run_dir


def cmd_template(cfg: ExperimentConfig, ensemble_path=None) -> Path:
    """Estimate and persist the Hotelling template from the training ensemble."""
    t0 = time.perf_counter()
    run_dir, manifest = _open_run(cfg)
    ensemble_path = Path(ensemble_path) if ensemble_path else run_dir / "train"
    ens = _load_verified_ensemble(manifest, ensemble_path)
    template = estimate_hotelling(ens, cfg.shrinkage)
    template.training_meta.pop("estimated_at", None)
    template.training_meta["ensemble_manifest_sha256"] = storage.sha256_file(ensemble_path / "manifest.json")
    template.training_meta["ensemble_content_sha256"] = ens.provenance["content_sha256"]
    json_path, vec_path = storage.save_template(template, run_dir / "template")
    manifest.record(json_path)
    manifest.record(vec_path)
    manifest.data["timing"]["template_s"] = time.perf_counter() - t0
    manifest.save()
    return json_path


def _denoise_chunk(args):
    images, template, config, offset = args
    return denoise_batch(images, template, config, item_offset=offset)[0]


def denoise_all(images, template, config: DenoiseConfig, batch_size=16, jobs=1) -> np.ndarray:
    """Denoise a stack of images in fixed-size chunks, optionally in parallel.

    Chunks are merged in item order, so the output does not depend on
    ``jobs``.
    """
    tasks = [
        (images[s:s + batch_size], template, config, s)
        for s in range(0, len(images), batch_size)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_denoise_chunk, tasks))
    else:
        parts = [_denoise_chunk(t) for t in tasks]
    return np.concatenate(parts, axis=0) if parts else np.empty_like(images)


def grid_tag(alpha, beta, gamma) -> str:
    return f"a{alpha:g}_b{beta:g}_g{gamma:g}"


def render_item_index(cfg: ExperimentConfig, ens: LabeledEnsemble) -> int:
    if cfg.render_item is not None:
        return int(cfg.render_item)
    present = np.flatnonzero(ens.labels == H1)
    return int(present[0]) if present.size else 0


def _fmt(x):
    return repr(float(x))


def cmd_sweep(cfg: ExperimentConfig, ensemble_path=None, template_path=None, jobs: int = 1) -> Path:
    """Denoise the test ensemble at every grid point and tabulate AUC and RMSE.

    The first row of ``results.csv`` is the raw-noisy baseline, with empty
    alpha/beta/gamma cells.
    """
    run_dir, manifest = _open_run(cfg)
    ensemble_path = Path(ensemble_path) if ensemble_path else run_dir / "test"
    template_path = Path(template_path) if template_path else run_dir / "template.json"
    ens = _load_verified_ensemble(manifest, ensemble_path)
    template = _load_verified_template(manifest, template_path)

    sweep_dir = run_dir / "sweep"
    (sweep_dir / "roc").mkdir(parents=True, exist_ok=True)
    (sweep_dir / "estimates").mkdir(parents=True, exist_ok=True)
    manifest.forget("sweep/")
    item = render_item_index(cfg, ens)
    rows = []

    t0 = time.perf_counter()
    base = roc_curve(score_ensemble(ens, template))
    base_rmse = float(np.mean([rmse(a, b) for a, b in zip(ens.noisy, ens.truth)]))
    _write_roc(manifest, sweep_dir / "roc", "raw", base)
    rows.append(["", "", "", _fmt(base.auc), _fmt(base.auc_std_err), _fmt(base_rmse),
                 f"{time.perf_counter() - t0:.3f}"])

    for alpha, beta, gamma in cfg.grid:
        t0 = time.perf_counter()
        dcfg = cfg.denoise_config(alpha, beta, gamma)
        est = denoise_all(ens.noisy, template, dcfg, cfg.batch_size, jobs)
        roc = roc_curve(score_ensemble(ens, template, est))
        mean_rmse = float(np.mean([rmse(a, b) for a, b in zip(est, ens.truth)]))
        tag = grid_tag(alpha, beta, gamma)
        _write_roc(manifest, sweep_dir / "roc", tag, roc)
        est_path = sweep_dir / "estimates" / f"{tag}.f64"
        storage.write_raster(est_path, est[item])
        manifest.record(est_path)
        elapsed = time.perf_counter() - t0
        rows.append([_fmt(alpha), _fmt(beta), _fmt(gamma), _fmt(roc.auc), _fmt(roc.auc_std_err),
                     _fmt(mean_rmse), f"{elapsed:.3f}"])
        log.info("alpha=%g beta=%g gamma=%g auc=%.4f (%.1fs)", alpha, beta, gamma, roc.auc, elapsed)

    results = sweep_dir / "results.csv"
    with open(results, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        writer.writerows(rows)
    # runtime_s is wall-clock and therefore excluded from the tracked hash
    manifest.data["sweep"] = {
        "render_item": item,
        "results_sha256_without_runtime": results_digest(results),
    }
    manifest.data["timing"]["sweep_s"] = sum(float(r[-1]) for r in rows)
    manifest.save()
    return results


def results_digest(path) -> str:
    import hashlib

    h = hashlib.sha256()
    for row in read_results(path, keep_runtime=False):
        h.update((",".join(row) + "\n").encode())
    return h.hexdigest()


def read_results(path, keep_runtime=True) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != RESULTS_HEADER:
        raise InvalidParameterError(f"{path} does not carry the results header")
    if keep_runtime:
        return rows
    return [r[:-1] for r in rows]


def load_results(path) -> list[dict]:
    """Parse ``results.csv`` into dicts; baseline alpha/beta/gamma are None."""
    rows = read_results(path)
    out = []
    for row in rows[1:]:
        rec = {}
        for key, val in zip(RESULTS_HEADER, row):
            rec[key] = float(val) if val != "" else None
        out.append(rec)
    return out


def _write_roc(manifest, directory, tag, roc):
    roc.to_csv(directory / f"{tag}.csv")
    roc.to_json(directory / f"{tag}.json")
    manifest.record(directory / f"{tag}.csv")
    manifest.record(directory / f"{tag}.json")


def cmd_render(run_dir) -> list[Path]:
    """Export truth, noisy and denoised panels plus difference maps as PNGs.

    Uses the estimates saved by the sweep for ``render_item`` at the render
    beta (the first alpha of the grid). Difference maps are taken against
    the gamma=0 estimate and share a symmetric window centred on mid-gray.
    """
    run_dir = Path(run_dir)
    manifest = RunManifest.load(run_dir)
    if manifest.data.get("config") is None or "sweep" not in manifest.data:
        raise ManifestMismatchError(f"{run_dir} has no completed sweep to render")
    manifest.verify_all()
    cfg = ExperimentConfig.from_dict(manifest.data["config"])
    ens = storage.load_ensemble(run_dir / "test", verify=True)
    item = manifest.data["sweep"]["render_item"]
    alpha = cfg.alphas[0]
    beta = cfg.render_beta if cfg.render_beta is not None else cfg.betas[0]
    if beta not in cfg.betas:
        raise InvalidParameterError(f"render beta {beta} is not on the sweep grid")
    if 0.0 not in cfg.gammas:
        raise InvalidParameterError("difference maps need gamma=0 on the sweep grid")

    shape = ens.shape
    estimates = {}
    for gamma in cfg.gammas:
        path = run_dir / "sweep" / "estimates" / f"{grid_tag(alpha, beta, gamma)}.f64"
        if not path.exists():
            raise ManifestMismatchError(f"missing sweep estimate {path.name}")
        estimates[gamma] = storage.read_raster(path, shape)

    out_dir = run_dir / "render"
    out_dir.mkdir(exist_ok=True)
    manifest.forget("render/")
    panels = [("truth", ens.truth[item]), ("noisy", ens.noisy[item])]
    panels += [(f"denoised_g{g:g}", estimates[g]) for g in cfg.gammas]
    lo = min(float(p.min()) for _, p in panels)
    hi = max(float(p.max()) for _, p in panels)
    written = []
    windows = {"panels": {"vmin": lo, "vmax": hi}}
    for name, image in panels:
        path = out_dir / f"{name}.png"
        storage.export_png(path, image, lo, hi)
        manifest.record(path)
        written.append(path)

    diffs = [(g, difference_map(estimates[g], estimates[0.0])) for g in cfg.gammas]
    half = max(float(np.abs(d).max()) for _, d in diffs)
    half = half if half > 0 else 1.0
    windows["difference_maps"] = {"vmin": -half, "vmax": half}
    for g, d in diffs:
        path = out_dir / f"difference_g{g:g}.png"
        storage.export_png(path, d, -half, half)
        manifest.record(path)
        written.append(path)
        raw = path.with_suffix(".f64")
        storage.write_raster(raw, d)
        manifest.record(raw)
    manifest.data["windows"] = windows
    manifest.data["render"] = {"item": item, "alpha": alpha, "beta": beta}
    manifest.save()
    return written


def cmd_evaluate(ensemble_path, template_path, out_stem, denoise_config=None, batch_size=16, jobs=1):
    """ROC of a template on an ensemble (optionally after denoising)."""
    ens = storage.load_ensemble(ensemble_path, verify=True)
    template = storage.load_template(template_path, verify=True)
    if denoise_config is None:
        roc = roc_curve(score_ensemble(ens, template))
    else:
        est = denoise_all(ens.noisy, template, denoise_config, batch_size, jobs)
        roc = roc_curve(score_ensemble(ens, template, est))
    out_stem = Path(out_stem)
    out_stem.parent.mkdir(parents=True, exist_ok=True)
    roc.to_csv(out_stem.with_suffix(".csv"))
    roc.to_json(out_stem.with_suffix(".json"))
    return roc


def run_all(cfg: ExperimentConfig, jobs: int = 1) -> Path:
    cmd_generate(cfg)
    cmd_template(cfg)
    cmd_sweep(cfg, jobs=jobs)
    run_dir = resolve_output_dir(cfg)
    cmd_render(run_dir)
    return run_dir
