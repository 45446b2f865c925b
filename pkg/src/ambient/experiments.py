"""Reproducible reconstruction runs and parameter sweeps.

Sweep outputs in the output directory::

    sweep_manifest.txt           config hash, axis, values
    metrics_<axis>_<value>.csv   per-sample metrics (+ mean / std rows)
    curve_<axis>.csv             mean and std of every metric per axis value
    curve_<axis>.png             the same curve rendered with matplotlib

Each sample gets seeds derived from the master seed and its index only, so
the same test signals, noise and sampler randomness are reused across axis
values and reruns are byte-identical.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import FistaConfig, fista_l1wavelet
from .config import AXES, ConfigError, ExperimentConfig
from .diffusion import NoiseSchedule, standard_noise
from .metrics import FIELDS, MetricReport, compute_metrics, write_metrics_csv
from .models import (
    GMAmbientDenoiser,
    GMDenoiser,
    MlpAmbientDenoiser,
    MlpDenoiser,
    TrainConfig,
    load_params,
    random_mixture,
    save_params,
    train_ambient_inpaint,
    train_ambient_mri,
    train_clean,
)
from .mri_sim import acquire, load_dataset, normalize, prewhiten, worker_count
from .numerics import as_rng
from .operators import (
    Downsample,
    Inpaint,
    MriAcquire,
    MriAggregate,
    gaussian_cs_operator,
    make_kspace_mask,
    make_pixel_mask,
)
from .samplers import InverseProblem, SamplerConfig, SamplerError, adps_sample, aos_predict, dps_sample, sample_uncond
from .tensorio import read_kv, save_tensor, write_kv

RECOVERABLE = (SamplerError, FloatingPointError, np.linalg.LinAlgError)


def sample_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([master, *keys]).generate_state(1, dtype=np.uint32)[0])


def build_prior(config: ExperimentConfig):
    return random_mixture(config.shape, config.prior_components, config.prior_seed,
                          spread=config.prior_spread, tau2=config.prior_tau2)


@dataclass(frozen=True)
class EvalItem:
    index: int
    image: np.ndarray
    coils: object = None
    mask: object = None


def evaluation_set(config: ExperimentConfig) -> list:
    if config.n_test == 0:
        raise ConfigError("empty test set")
    if config.task == "mri":
        items = load_dataset(config.dataset)[: config.n_test]
        if not items:
            raise ConfigError("empty test set")
        return [EvalItem(it.index, it.image, it.coils, it.mask) for it in items]
    prior = build_prior(config)
    x = prior.sample(config.n_test, as_rng(sample_seed(config.seed, 0xDA7A)))
    return [EvalItem(i, x[i]) for i in range(config.n_test)]


def load_model(config: ExperimentConfig, ambient: bool):
    if config.model == "analytic":
        if config.task == "mri":
            raise ConfigError("analytic models exist only for the Gaussian-mixture toy tasks")
        prior = build_prior(config)
        return GMAmbientDenoiser(prior) if ambient else GMDenoiser(prior)
    params = load_params(config.model)
    if ambient != params.mask_channel:
        want = "ambient (mask-conditioned)" if ambient else "clean"
        raise ConfigError(f"sampler {config.sampler!r} needs a {want} checkpoint")
    return MlpAmbientDenoiser(params) if ambient else MlpDenoiser(params)


def _sampler_config(config: ExperimentConfig, seed: int) -> SamplerConfig:
    return SamplerConfig.parse_gamma(config.gamma, steps=config.steps, seed=seed, stochastic=config.stochastic)


def _toy_operator(config: ExperimentConfig, index: int):
    if config.task == "cs":
        return gaussian_cs_operator(config.shape, config.m, config.op_seed)
    if config.task == "superres":
        return Downsample(config.shape, config.factor)
    return Inpaint(make_pixel_mask(config.shape, config.p, sample_seed(config.op_seed, index)).mask)


def _reconstruct_toy(config, model, item: EvalItem):
    seed = sample_seed(config.seed, item.index)
    rng = as_rng(seed)
    op = _toy_operator(config, item.index)
    y = op.apply(item.image)
    if config.noise_std > 0:
        y = y + config.noise_std * standard_noise(y.shape, np.iscomplexobj(y), rng)
    schedule = NoiseSchedule()
    shape = tuple(config.shape)
    if config.sampler == "fista":
        return fista_l1wavelet(y, op, FistaConfig(config.fista_lambda, config.fista_iters))
    if config.sampler == "aos":
        return aos_predict(model, y, op, schedule=schedule)
    scfg = _sampler_config(config, seed)
    if config.sampler == "uncond":
        return sample_uncond(model, schedule, scfg, shape)
    if config.sampler == "dps":
        return dps_sample(model, InverseProblem(y, op), schedule, scfg, shape)
    a_train = Inpaint(make_pixel_mask(shape, config.train_p, sample_seed(seed, 1)).mask)
    return adps_sample(model, InverseProblem(y, op), a_train, schedule, scfg, shape)


def _mri_mask(config, item: EvalItem):
    if abs(item.mask.R - config.R) < 1e-12 and item.mask.acs_lines == config.acs_lines:
        return item.mask
    return make_kspace_mask(item.mask.shape, config.R, config.acs_lines, sample_seed(config.op_seed, item.index))


def _reconstruct_mri(config, model, item: EvalItem):
    seed = sample_seed(config.seed, item.index)
    mask = _mri_mask(config, item)
    kspace, scale = normalize(prewhiten(acquire(item.image, item.coils, mask)))
    acq = MriAcquire(mask, item.coils)
    shape = tuple(mask.shape)
    schedule = NoiseSchedule()
    if config.sampler == "fista":
        est = fista_l1wavelet(kspace.z, acq, FistaConfig(config.fista_lambda, config.fista_iters))
    elif config.sampler == "aos":
        est = aos_predict(model, acq.adjoint(kspace.z), MriAggregate(mask, item.coils), schedule=schedule)
    else:
        scfg = _sampler_config(config, seed)
        if config.sampler == "uncond":
            est = sample_uncond(model, schedule, scfg, shape, complex_=True)
        elif config.sampler == "dps":
            est = dps_sample(model, InverseProblem(kspace.z, acq), schedule, scfg, shape, complex_=True)
        else:
            train_mask = make_kspace_mask(shape, config.train_R + 1, config.acs_lines, sample_seed(seed, 1))
            est = adps_sample(model, InverseProblem(kspace.z, acq), MriAggregate(train_mask, item.coils),
                              schedule, scfg, shape, complex_=True)
    return est * scale


def reconstruct_item(config: ExperimentConfig, model, item: EvalItem):
    """Returns ``(reference, estimate, data_range)``; MRI metrics use magnitudes."""
    if config.task == "mri":
        est = _reconstruct_mri(config, model, item)
        ref = np.abs(item.image)
        return ref, est, float(ref.max()) or 1.0
    est = _reconstruct_toy(config, model, item)
    return item.image, est, None


@dataclass
class RunResult:
    report: MetricReport
    estimates: dict
    failures: list


def run_reconstruction(config: ExperimentConfig, items=None, model=None) -> RunResult:
    """Reconstruct the test set; sampler failures are recorded, not raised."""
    items = evaluation_set(config) if items is None else items
    if model is None and config.sampler != "fista":
        model = load_model(config, ambient=config.sampler in ("adps", "aos"))

    def work(item):
        try:
            ref, est, drange = reconstruct_item(config, model, item)
        except RECOVERABLE as exc:
            return item.index, None, None, f"{type(exc).__name__}: {exc}"
        cmp_est = np.abs(est) if config.task == "mri" else est
        return item.index, est, compute_metrics(ref, cmp_est, drange, str(item.index)), None

    with ThreadPoolExecutor(worker_count()) as pool:
        results = list(pool.map(work, items))
    report, estimates, failures = MetricReport(), {}, []
    for index, est, rep, err in results:
        if err is not None:
            failures.append((index, err))
            continue
        estimates[index] = est
        report = report.extend(rep)
    return RunResult(report, estimates, failures)


def _fmt_value(v) -> str:
    f = float(v)
    return str(int(f)) if f == int(f) else repr(f)


def _check_hash(out: Path, digest: str) -> None:
    manifest = out / "sweep_manifest.txt"
    if manifest.exists():
        old = read_kv(manifest).get("config_hash")
        if old != digest:
            raise ConfigError(f"{out} holds outputs of config {old}; refusing to mix with {digest}")
    for f in sorted(out.glob("*.csv")):
        with f.open(encoding="utf-8") as fh:
            first = fh.readline().strip()
        if first.startswith("# config_hash=") and first.split("=", 1)[1] != digest:
            raise ConfigError(f"{f} belongs to config {first.split('=', 1)[1]}; refusing to mix with {digest}")


def write_reconstruction(config: ExperimentConfig, result: RunResult, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    digest = config.digest()
    for index, est in sorted(result.estimates.items()):
        save_tensor(out / f"recon_{index:06d}.ambt", np.asarray(est))
    _write_metrics(out / "metrics.csv", result, {"config_hash": digest})
    return out / "metrics.csv"


def _write_metrics(path, result: RunResult, comments: dict) -> None:
    comments = dict(comments)
    if result.failures:
        comments["failed"] = ";".join(f"{i}:{msg}" for i, msg in result.failures)
    write_metrics_csv(path, result.report, comments)


CURVE_COLUMNS = ("value", "n", "failed", *[f"{f}_{s}" for f in FIELDS for s in ("mean", "std")])


def run_sweep(config: ExperimentConfig, axis: str, values, out=None) -> dict:
    """Reconstruct the test set at every axis value and write metric and curve files.

    Returns the paths written. Raises before writing anything if the test
    set is empty or the output directory holds another configuration.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {sorted(AXES)}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one axis value")
    configs = [config.with_axis(axis, v) for v in values]
    items = evaluation_set(config)
    out = Path(config.output if out is None else out)
    digest = config.digest()
    if out.exists():
        _check_hash(out, digest)
    models = {}
    results = []
    for cfg in configs:
        ambient = cfg.sampler in ("adps", "aos")
        if cfg.sampler != "fista" and ambient not in models:
            models[ambient] = load_model(cfg, ambient)
        results.append(run_reconstruction(cfg, items, models.get(ambient)))

    out.mkdir(parents=True, exist_ok=True)
    write_kv(out / "sweep_manifest.txt", {
        "config_hash": digest, "axis": axis, "values": [_fmt_value(v) for v in values],
        "n_test": len(items),
    })
    (out / "config.txt").write_text(config.to_text(include_output=False), encoding="utf-8")
    paths = {"manifest": out / "sweep_manifest.txt", "metrics": []}
    rows = []
    for v, res in zip(values, results):
        p = out / f"metrics_{axis}_{_fmt_value(v)}.csv"
        _write_metrics(p, res, {"config_hash": digest, "axis": axis, "value": _fmt_value(v)})
        paths["metrics"].append(p)
        row = {"value": float(v), "n": len(res.report.samples), "failed": len(res.failures)}
        for f in FIELDS:
            has = bool(res.report.samples)
            row[f"{f}_mean"] = res.report.mean(f) if has else float("nan")
            row[f"{f}_std"] = res.report.std(f) if has else float("nan")
        rows.append(row)
    curve = out / f"curve_{axis}.csv"
    with curve.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={digest}\n# axis={axis}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for row in rows:
            w.writerow([_fmt_value(row["value"]), row["n"], row["failed"],
                        *[repr(float(row[c])) for c in CURVE_COLUMNS[3:]]])
    paths["curve"] = curve
    from .plotting import plot_curve

    paths["plot"] = plot_curve(rows, axis, out / f"curve_{axis}.png", title=f"{config.task} / {config.sampler}")
    return paths


def read_curve(path):
    """Returns ``(comments, rows)`` of a curve CSV with numeric columns."""
    comments, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            comments[k] = v
        elif line:
            lines.append(line)
    rows = [{k: float(v) for k, v in rec.items()} for rec in csv.DictReader(lines)]
    return comments, rows


# -- training ----------------------------------------------------------------------

def _mri_training_items(config: ExperimentConfig):
    items = load_dataset(config.dataset)
    out = []
    for it in items:
        kspace, scale = normalize(prewhiten(acquire(it.image, it.coils, it.mask)))
        out.append((kspace, it.image / scale))
    return out


def train_model(config: ExperimentConfig, mode: str, train_config: TrainConfig, out) -> tuple:
    """Train a clean or ambient MLP for ``config.task`` and save it to ``out``.

    Toy tasks draw signals from the configured mixture; ambient training sees
    them through pixel masks with erasure ``train_p``. The MRI task trains on
    the dataset's undersampled k-space (ambient) or normalized images (clean).
    """
    if mode not in ("clean", "ambient"):
        raise ConfigError(f"unknown training mode {mode!r}")
    if config.task == "mri":
        data = _mri_training_items(config)
        if mode == "ambient":
            def sample_fn(rng, b):
                return [data[i][0] for i in rng.integers(len(data), size=b)]
            params, trace = train_ambient_mri(sample_fn, train_config)
        else:
            images = np.stack([img for _, img in data])

            def sample_fn(rng, b):
                return images[rng.integers(len(images), size=b)]
            params, trace = train_clean(sample_fn, train_config)
    else:
        prior = build_prior(config)
        if mode == "ambient":
            def sample_fn(rng, b):
                x = prior.sample(b, rng)
                masks = (rng.random(x.shape) >= config.train_p).astype(np.float64)
                return masks * x, masks
            params, trace = train_ambient_inpaint(sample_fn, train_config)
        else:
            params, trace = train_clean(lambda rng, b: prior.sample(b, rng), train_config)
    save_params(out, params, {
        "mode": mode, "task": config.task, "config_hash": config.digest(),
        "train_digest": train_config.digest(), "final_loss": float(np.mean(trace[-min(len(trace), 100):])),
    })
    return params, trace

