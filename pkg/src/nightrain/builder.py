"""Dataset building, histogram analysis, metric evaluation and converter checks.

Config files are flat ``key = value`` text (``#`` starts a comment)::

    subset = SD
    tau1 = 0.2
    tau2 = 0.8
    merge_mode = conv
    use_illumination = true
    use_defocus = true
    defocus_radius = 3
    seed = 7
    streak.noise_count = 120        # pin any sampled parameter
    drop.mode_amplitudes = 0.1, 0.05

Manifests are JSON Lines: one header object, then one object per pair in
input order.  Output paths are stored relative to the manifest's directory.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
import json
import logging
import os

import numpy as np

from . import colorspace, compositor, csclab, imagecore, rainmask
from ._seeding import derive_seed, make_rng
from ._validation import ContractError

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
GRAD_TOL = 1e-4
MSE_TOL = 1e-5

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "on": True,
               "false": False, "no": False, "0": False, "off": False}
_STREAK_TYPES = {f.name: f.type for f in fields(rainmask.StreakParams)}
_DROP_TYPES = {f.name: f.type for f in fields(rainmask.DropParams)}


class ConfigError(ContractError):
    pass


# config ---------------------------------------------------------------------

def _parse_bool(value, where):
    try:
        return _BOOL_WORDS[value.lower()]
    except KeyError:
        raise ConfigError(f"{where}: expected a boolean, got {value!r}") from None


def _parse_param(kind, name, value, where):
    types = _STREAK_TYPES if kind == "streak" else _DROP_TYPES
    if name not in types:
        raise ConfigError(f"{where}: unknown {kind} parameter {name!r}")
    try:
        if name == "mode_amplitudes":
            return tuple(float(v) for v in value.split(",") if v.strip())
        if types[name] in (int, "int"):
            return int(value)
        return float(value)
    except ValueError:
        raise ConfigError(f"{where}: bad value {value!r} for {kind}.{name}") from None


def parse_config(text, source="<config>"):
    """Parse config text into a :class:`~nightrain.compositor.SynthesisConfig`."""
    kw = {"streak_overrides": {}, "drop_overrides": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in ("subset", "kind"):
                kw["kind"] = value.upper()
            elif key in ("tau1", "tau2"):
                kw[key] = float(value)
            elif key == "merge_mode":
                kw[key] = value.lower()
            elif key in ("use_illumination", "use_defocus"):
                kw[key] = _parse_bool(value, where)
            elif key in ("defocus_radius", "seed"):
                kw[key] = int(value)
            elif key.startswith(("streak.", "drop.")):
                kind, name = key.split(".", 1)
                kw[f"{kind}_overrides"][name] = _parse_param(kind, name, value, where)
            else:
                raise ConfigError(f"{where}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{where}: bad value {value!r} for {key!r}") from None
    try:
        return compositor.SynthesisConfig(**kw)
    except ContractError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path):
    with open(os.fspath(path), encoding="utf-8") as fh:
        return parse_config(fh.read(), source=os.fspath(path))


def config_to_dict(cfg):
    return {
        "subset": cfg.kind,
        "tau1": cfg.tau1,
        "tau2": cfg.tau2,
        "merge_mode": cfg.merge_mode,
        "use_illumination": cfg.use_illumination,
        "use_defocus": cfg.use_defocus,
        "defocus_radius": cfg.defocus_radius,
        "seed": cfg.seed,
        **{f"streak.{k}": _jsonable(v) for k, v in sorted(cfg.streak_overrides.items())},
        **{f"drop.{k}": _jsonable(v) for k, v in sorted(cfg.drop_overrides.items())},
    }


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


# build ----------------------------------------------------------------------

def list_backgrounds(directory):
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"input directory not found: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))
    if not names:
        raise ContractError(f"no PNG backgrounds in {directory}")
    return [os.path.join(directory, n) for n in names]


def load_background(path):
    img = imagecore.load_png(path)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img


def flatten_params(result):
    flat = {}
    for stage, params in result.params.items():
        for key, value in params.items():
            flat[f"{stage}.{key}"] = value
    return flat


def _build_one(job):
    index, bg_path, out_dir, cfg = job
    seed = derive_seed(cfg.seed, index)
    bg = load_background(bg_path)
    result = compositor.synthesize_detailed(bg, replace(cfg, seed=seed))
    name = os.path.splitext(os.path.basename(bg_path))[0] + ".png"
    rainy_rel = os.path.join("rainy", name)
    clean_rel = os.path.join("clean", name)
    imagecore.save_png(result.rainy, os.path.join(out_dir, rainy_rel))
    imagecore.save_png(result.clean, os.path.join(out_dir, clean_rel))
    return {
        "index": index,
        "background_path": os.path.abspath(bg_path),
        "rainy_path": rainy_rel,
        "clean_path": clean_rel,
        "derived_seed": seed,
        "sampled_params": flatten_params(result),
        "thresholds": [cfg.tau1, cfg.tau2],
    }


@dataclass
class DatasetManifest:
    version: int
    master_seed: int
    subset: str
    config: dict
    entries: list = field(default_factory=list)
    root: str = "."

    def resolve(self, rel):
        return os.path.join(self.root, rel)

    def dumps(self):
        header = {"type": "header", "version": self.version, "master_seed": self.master_seed,
                  "subset": self.subset, "config": self.config, "count": len(self.entries)}
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps({"type": "entry", **e}, sort_keys=True) for e in self.entries]
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def read(cls, path):
        path = os.fspath(path)
        with open(path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        if not records or records[0].get("type") != "header":
            raise ContractError(f"{path}: missing manifest header")
        head = records[0]
        if head.get("version") != MANIFEST_VERSION:
            raise ContractError(f"{path}: unsupported manifest version {head.get('version')}")
        entries = []
        for rec in records[1:]:
            rec = dict(rec)
            rec.pop("type", None)
            entries.append(rec)
        return cls(version=head["version"], master_seed=head["master_seed"],
                   subset=head["subset"], config=head["config"], entries=entries,
                   root=os.path.dirname(os.path.abspath(path)))


def build_dataset(cfg, backgrounds_dir, out_dir, jobs=1):
    """Synthesize one pair per background PNG (sorted by name) and write a manifest.

    Image ``i`` uses seed ``derive_seed(cfg.seed, i)``; the output tree does
    not depend on ``jobs``.
    """
    paths = list_backgrounds(backgrounds_dir)
    out_dir = os.fspath(out_dir)
    for sub in ("rainy", "clean"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    work = [(i, p, out_dir, cfg) for i, p in enumerate(paths)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_build_one, work))
    else:
        entries = [_build_one(job) for job in work]
    manifest = DatasetManifest(version=MANIFEST_VERSION, master_seed=cfg.seed, subset=cfg.kind,
                               config=config_to_dict(cfg), entries=entries,
                               root=os.path.abspath(out_dir))
    manifest.write(os.path.join(out_dir, MANIFEST_NAME))
    log.info("built %d %s pairs in %s", len(entries), cfg.kind, out_dir)
    return manifest


# analyze --------------------------------------------------------------------

@dataclass
class AnalysisReport:
    rows: list
    y_dominance: float
    n_pairs: int

    def render(self):
        out = [f"{'pair':<24} {'space':<6} {'chan':<4} {'L1':>10} {'chi2':>14}"]
        for r in self.rows:
            out.append(f"{r['name']:<24} {r['space']:<6} {r['channel']:<4} "
                       f"{r['l1']:>10.6f} {r['chi2']:>14.4f}")
        dominated = round(self.y_dominance * self.n_pairs)
        out.append(f"Y-dominance: {dominated}/{self.n_pairs} pairs = {self.y_dominance:.3f}")
        return "\n".join(out)


def channel_distances(rainy, clean, space):
    """L1 and chi2 histogram distances per channel of ``space``."""
    rows = []
    for idx, channel in enumerate(colorspace.SPACES[space]):
        ha = imagecore.histogram(colorspace.extract_channel(rainy, space, idx), channel)
        hb = imagecore.histogram(colorspace.extract_channel(clean, space, idx), channel)
        rows.append({"space": space, "channel": channel,
                     "l1": imagecore.histogram_distance(ha, hb, "L1"),
                     "chi2": imagecore.histogram_distance(ha, hb, "chi2")})
    return rows


def y_dominates(rainy, clean):
    """True if the Y-channel L1 distance strictly exceeds both Cb and Cr."""
    d = {r["channel"]: r["l1"] for r in channel_distances(rainy, clean, "ycbcr")}
    return d["Y"] > d["Cb"] and d["Y"] > d["Cr"]


def analyze(manifest, spaces=("ycbcr",)):
    if not isinstance(manifest, DatasetManifest):
        manifest = DatasetManifest.read(manifest)
    spaces = [s.lower() for s in spaces]
    for s in spaces:
        if s not in colorspace.SPACES:
            raise ContractError(f"unknown colour space {s!r}")
    rows, dominated = [], 0
    for entry in manifest.entries:
        rainy = load_background(manifest.resolve(entry["rainy_path"]))
        clean = load_background(manifest.resolve(entry["clean_path"]))
        name = os.path.basename(entry["rainy_path"])
        for space in spaces:
            for r in channel_distances(rainy, clean, space):
                rows.append({"index": entry["index"], "name": name, **r})
        dominated += y_dominates(rainy, clean)
    n = len(manifest.entries)
    return AnalysisReport(rows=rows, y_dominance=dominated / n if n else 0.0, n_pairs=n)


# evaluate -------------------------------------------------------------------

@dataclass
class EvaluationReport:
    rows: list

    @property
    def mean_psnr(self):
        return float(np.mean([r["psnr"] for r in self.rows]))

    @property
    def mean_ssim(self):
        return float(np.mean([r["ssim"] for r in self.rows]))

    def render(self):
        out = [f"{'image':<28} {'PSNR':>9} {'SSIM':>8}"]
        out += [f"{r['name']:<28} {r['psnr']:>9.3f} {r['ssim']:>8.4f}" for r in self.rows]
        out.append(f"{'mean':<28} {self.mean_psnr:>9.3f} {self.mean_ssim:>8.4f}")
        return "\n".join(out)


def evaluate(pred_dir, gt_dir):
    """PSNR and SSIM for every PNG in ``pred_dir`` against its namesake in ``gt_dir``."""
    pred = {os.path.basename(p) for p in list_backgrounds(pred_dir)}
    gt = {os.path.basename(p) for p in list_backgrounds(gt_dir)}
    for name in sorted(pred ^ gt):
        where = gt_dir if name in pred else pred_dir
        raise ContractError(f"{name}: no matching file in {where}")
    rows = []
    for name in sorted(pred):
        a = imagecore.load_png(os.path.join(pred_dir, name))
        b = imagecore.load_png(os.path.join(gt_dir, name))
        if a.shape != b.shape:
            raise ContractError(f"{name}: shape {a.shape} differs from ground truth {b.shape}")
        rows.append({"name": name, "psnr": imagecore.psnr(a, b), "ssim": imagecore.ssim(a, b)})
    return EvaluationReport(rows)


# converter verification -----------------------------------------------------

@dataclass
class CSCReport:
    grad_rel_err: float
    heldout_mse: float
    epochs: int
    seed: int

    @property
    def passed(self):
        return self.grad_rel_err < GRAD_TOL and self.heldout_mse < MSE_TOL

    def render(self):
        status = "PASS" if self.passed else "FAIL"
        return "\n".join([
            f"seed {self.seed}, {self.epochs} gradient-descent steps",
            f"gradient max relative error: {self.grad_rel_err:.3e} (limit {GRAD_TOL:.0e})",
            f"held-out MSE vs canonical YCbCr: {self.heldout_mse:.3e} (limit {MSE_TOL:.0e})",
            status,
        ])


def gradient_check(seed=0, n_inits=10, batch_size=64, hidden=csclab.DEFAULT_HIDDEN,
                   losses=csclab.DIFFERENTIABLE_LOSSES):
    """Worst analytic-vs-central-difference relative error over random converters."""
    worst = 0.0
    for k in range(n_inits):
        rng = make_rng(derive_seed(seed, "gradcheck", k))
        conv = csclab.LearnableConverter(hidden=hidden, random_state=derive_seed(seed, "init", k))
        conv.initialize()
        batch = (rng.random((batch_size, 3)), rng.normal(0.0, 0.5, (batch_size, 3)))
        for loss in losses:
            analytic = csclab.gradient(conv, batch, loss)
            numeric = csclab.finite_diff_gradient(conv, batch, loss)
            worst = max(worst, csclab.max_relative_error(analytic, numeric))
    return worst


def verify_csc(seed=0, epochs=csclab.DEFAULT_EPOCHS):
    grad_err = gradient_check(seed)
    _, mse = csclab.train_recover(seed=seed, epochs=epochs)
    return CSCReport(grad_rel_err=grad_err, heldout_mse=mse, epochs=epochs, seed=seed)
