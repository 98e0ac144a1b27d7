"""Config-driven experiment pipelines and artifact directories.

Configs are INI files read with :mod:`configparser`.  Images live on the
square ``[-1, 1]^2`` unless ``pixel_size`` is given, so the default pixel (and
detector bin) size is ``2 / size``; the regulariser weights in the bundled
configs are expressed in these units.
"""
from __future__ import annotations

import configparser
import io
import json
import logging
import math
import time
import traceback
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import baselines, metrics, phantoms
from . import io as wio
from .errors import ConfigurationError, SolverError, WedgefillError
from .joint_energy import JointParams, JointProblem
from .solvers.alternating import InnerOptions, JointOptions, run_joint
from .tomo_core import get_projector, make_limited_angle_mask, parallel_geometry, wedge_angles

log = logging.getLogger(__name__)

METHODS = ("fbp", "sirt", "tv", "joint")
PHANTOMS = ("rings", "shepp_logan", "particle")


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    phantom: str = "shepp_logan"
    size: int = 64
    seed: int = 0
    noise: float = 0.05
    n_angles: int = 180
    angle_step: float = 1.0
    wedge: float = 60.0
    keep_every: int = 1
    pixel_size: float = 0.0  # 0 means 2 / size
    tv_lambda: float = 1e-3
    tv_iters: int = 1000
    sirt_iters: int = 100
    fbp_window: str = "ramlak"
    alpha1: float = 1.0 / 16
    alpha2: float = 1.0
    alpha3: float = 0.3
    beta1: float = 1e-3
    beta2: float = 300.0
    beta3: float = 1e10
    rho: float = 1.0
    sigma: float = 2.5
    tau_x: float = 1e-3
    tau_y: float = 1e-4
    iters: int = 200
    inner_iters: int = 200
    inner_tol: float = 1e-6
    checkpoint_every: int = 0
    renders: bool = True
    methods: tuple = METHODS

    @property
    def resolved_pixel_size(self):
        return self.pixel_size if self.pixel_size > 0 else 2.0 / self.size

    def joint_params(self):
        return JointParams(alpha1=self.alpha1, alpha2=self.alpha2, alpha3=self.alpha3,
                           beta1=self.beta1, beta2=self.beta2, beta3=self.beta3,
                           rho=self.rho, sigma=self.sigma, tau_x=self.tau_x,
                           tau_y=self.tau_y, iters=self.iters)

    def validate(self):
        if self.phantom not in PHANTOMS:
            raise ConfigurationError(f"phantom: expected one of {PHANTOMS}, got {self.phantom!r}")
        if self.size < 16:
            raise ConfigurationError("size: must be >= 16")
        if self.noise < 0:
            raise ConfigurationError("noise: must be >= 0")
        if self.n_angles < 1 or self.angle_step <= 0 or self.n_angles * self.angle_step > 180:
            raise ConfigurationError("n_angles/angle_step: views must fit in 180 degrees")
        if not 0 < self.wedge <= 180:
            raise ConfigurationError("wedge: kept span must be in (0, 180]")
        if self.keep_every < 1:
            raise ConfigurationError("keep_every: must be >= 1")
        if self.pixel_size < 0:
            raise ConfigurationError("pixel_size: must be >= 0")
        if self.tv_lambda < 0 or self.tv_iters < 0 or self.sirt_iters < 0:
            raise ConfigurationError("tv_lambda/tv_iters/sirt_iters: must be >= 0")
        if self.fbp_window not in ("ramlak", "hann"):
            raise ConfigurationError("fbp_window: expected 'ramlak' or 'hann'")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigurationError(f"methods: unknown {bad}")
        self.joint_params()
        return self


# section -> keys, used for both parsing and printing
SECTIONS = {
    "experiment": ("name", "phantom", "size", "seed", "noise", "methods"),
    "geometry": ("n_angles", "angle_step", "wedge", "keep_every", "pixel_size"),
    "baselines": ("tv_lambda", "tv_iters", "sirt_iters", "fbp_window"),
    "joint": ("alpha1", "alpha2", "alpha3", "beta1", "beta2", "beta3", "rho", "sigma",
              "tau_x", "tau_y", "iters", "inner_iters", "inner_tol", "checkpoint_every"),
    "output": ("renders",),
}
_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key, raw):
    kind = _TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("1", "yes", "true", "on"):
                return True
            if low in ("0", "no", "false", "off"):
                return False
            raise ValueError(raw)
        if kind == "tuple":
            return tuple(t.strip() for t in raw.replace(",", " ").split() if t.strip())
        return raw
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {kind}") from None


def parse_config(text, source="<string>"):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from None
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in SECTIONS[section]:
                raise ConfigurationError(f"{source}: unknown key {section}.{key}")
            values[key] = _convert(key, raw)
    return ExperimentConfig(**values)


def load_config(path, **overrides):
    """Read and validate a config file; ``None`` overrides are ignored."""
    path = Path(path)
    if not path.is_file():
        bundled = bundled_config_path(path.name)
        if bundled is None:
            raise ConfigurationError(f"config file not found: {path}")
        path = bundled
    cfg = parse_config(path.read_text(), str(path))
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg.validate()


def bundled_config_path(name):
    ref = resources.files("wedgefill") / "configs" / name
    return Path(str(ref)) if ref.is_file() else None


def config_text(cfg):
    """Resolved config in the same INI layout it is read from."""
    cp = configparser.ConfigParser()
    for section, keys in SECTIONS.items():
        cp[section] = {}
        for key in keys:
            val = getattr(cfg, key)
            if isinstance(val, tuple):
                val = ", ".join(val)
            elif isinstance(val, bool):
                val = "yes" if val else "no"
            cp[section][key] = repr(val) if isinstance(val, float) else str(val)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- dataset -----------------------------------------------------------------

@dataclass
class Dataset:
    phantom: np.ndarray
    geometry: object
    projector: object
    clean: np.ndarray
    mask: np.ndarray
    data: np.ndarray
    pixel_size: float


def make_phantom(kind, size):
    if kind == "rings":
        return phantoms.two_rings(size)
    if kind == "shepp_logan":
        return phantoms.shepp_logan_modified(size)
    if kind == "particle":
        return phantoms.faceted_particle(size)
    raise ConfigurationError(f"phantom: unknown kind {kind!r}")


def kept_angles(cfg, geometry):
    kept = wedge_angles(geometry, cfg.wedge)
    if cfg.keep_every > 1:
        grid = cfg.keep_every * cfg.angle_step
        kept = tuple(a for a in kept if math.isclose(a / grid, round(a / grid), abs_tol=1e-9))
    if not kept:
        raise ConfigurationError("wedge/keep_every: no angle is kept")
    return kept


def build_dataset(cfg):
    ps = cfg.resolved_pixel_size
    geom = parallel_geometry(cfg.n_angles, cfg.angle_step, cfg.size, pixel_size=ps,
                             detector_spacing=ps)
    R = get_projector(geom, (cfg.size, cfg.size), ps)
    u = make_phantom(cfg.phantom, cfg.size)
    clean = R.forward(u)
    mask = make_limited_angle_mask(geom, kept_angles(cfg, geom))
    data = np.where(mask, phantoms.add_gaussian_noise(clean, cfg.noise, cfg.seed), 0.0)
    return Dataset(u, geom, R, clean, mask, data, ps)


# -- methods -----------------------------------------------------------------

def tv_initialiser(ds, cfg):
    return baselines.tv_reconstruct(ds.data, ds.mask, ds.geometry, cfg.tv_lambda, cfg.tv_iters,
                                    ds.phantom.shape, ds.pixel_size)


def run_methods(ds, cfg, methods=None, out=None):
    """Run the requested reconstructions; returns ``{method: image}`` and the joint state."""
    methods = cfg.methods if methods is None else methods
    shape = ds.phantom.shape
    images, state = {}, None
    if "fbp" in methods:
        images["fbp"] = baselines.fbp(ds.data, ds.mask, ds.geometry, shape, ds.pixel_size,
                                      window=cfg.fbp_window)
    if "sirt" in methods:
        images["sirt"] = baselines.sirt(ds.data, ds.mask, ds.geometry, cfg.sirt_iters, shape,
                                        ds.pixel_size)
    if "tv" in methods or "joint" in methods:
        u0 = tv_initialiser(ds, cfg)
        if "tv" in methods:
            images["tv"] = u0
        if "joint" in methods:
            v0 = ds.projector.forward(u0)
            if out is not None:
                wio.write_binary(out / "u0.bin", u0)
                wio.write_binary(out / "v0.bin", v0)
            prob = JointProblem(ds.projector, ds.data, ds.mask, cfg.joint_params())
            opts = JointOptions(inner=InnerOptions(max_iter=cfg.inner_iters, tol=cfg.inner_tol),
                                checkpoint_dir=str(out / "checkpoints") if out is not None else None,
                                checkpoint_every=cfg.checkpoint_every)
            state = run_joint(u0, v0, prob, opts)
            images["joint"] = state.u
    return images, state


def score(images, ref):
    """Per-method PSNR/SSIM rows, in :data:`METHODS` order."""
    rows = []
    for name in METHODS:
        if name in images:
            x = images[name]
            rows.append({"method": name, "psnr": metrics.psnr(x, ref), "ssim": metrics.ssim(x, ref),
                         "anisotropy": metrics.anisotropy_ratio(x)})
    return rows


def format_table(rows):
    lines = [f"{'method':<8}{'psnr_db':>10}{'ssim':>9}{'aniso':>9}"]
    for r in rows:
        lines.append(f"{r['method']:<8}{r['psnr']:>10.3f}{r['ssim']:>9.4f}{r['anisotropy']:>9.4f}")
    return "\n".join(lines)


def write_metrics(path, cfg, rows, phantom):
    lines = [f"name={cfg.name}", f"seed={cfg.seed}", f"size={cfg.size}",
             f"phantom_anisotropy={metrics.anisotropy_ratio(phantom)!r}"]
    for r in rows:
        for key in ("psnr", "ssim", "anisotropy"):
            lines.append(f"{r['method']}.{key}={r[key]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def _render(out, stem, img):
    wio.write_pgm(out / f"{stem}.pgm", img)


def run_experiment(config, out_dir, methods=None):
    """Synthesize data, run the methods and write every artifact to ``out_dir``.

    On a solver failure the artifacts written so far are kept, ``error.json``
    records the failure and the :class:`SolverError` is re-raised.
    """
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(config_text(cfg))
    ds = build_dataset(cfg)
    wio.write_binary(out / "phantom.bin", ds.phantom)
    wio.write_binary(out / "sinogram_clean.bin", ds.clean)
    wio.write_binary(out / "data.bin", ds.data)
    wio.write_mask(out / "mask.csv", ds.mask)
    if cfg.renders:
        _render(out, "phantom", ds.phantom)
        _render(out, "data", ds.data)
    t0 = time.perf_counter()
    try:
        images, state = run_methods(ds, cfg, methods, out)
    except SolverError as exc:
        (out / "error.json").write_text(json.dumps({
            "error": type(exc).__name__, "message": str(exc),
            "diagnostics": {k: repr(v) for k, v in exc.diagnostics.items()},
            "traceback": traceback.format_exc()}, indent=2))
        raise
    for name, img in images.items():
        wio.write_binary(out / f"u_{name}.bin", img)
        if cfg.renders:
            _render(out, f"u_{name}", img)
            _render(out, f"u_{name}_threshold", metrics.threshold_midpoint(img))
    if state is not None:
        wio.write_binary(out / "v_joint.bin", state.v)
        state.write_trace(out / "energy_trace.csv")
        if cfg.renders:
            _render(out, "v_joint", state.v)
    rows = score(images, ds.phantom)
    write_metrics(out / "metrics.txt", cfg, rows, ds.phantom)
    (out / "summary.txt").write_text(format_table(rows) + "\n")
    log.info("%s: finished in %.1f s", cfg.name, time.perf_counter() - t0)
    return out


def compare_methods(config, out_dir=None):
    """Run all four methods on one dataset; returns the score rows."""
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    cfg.methods = METHODS
    if out_dir is not None:
        run_experiment(cfg, out_dir)
        m = read_metrics(Path(out_dir) / "metrics.txt")
        return [{"method": k, "psnr": m[f"{k}.psnr"], "ssim": m[f"{k}.ssim"],
                 "anisotropy": m[f"{k}.anisotropy"]} for k in METHODS]
    ds = build_dataset(cfg.validate())
    images, _ = run_methods(ds, cfg, METHODS)
    return score(images, ds.phantom)


__all__ = ["ExperimentConfig", "Dataset", "load_config", "parse_config", "config_text",
           "build_dataset", "run_methods", "run_experiment", "compare_methods", "score",
           "format_table", "read_metrics", "WedgefillError"]
