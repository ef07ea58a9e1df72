"""Command-line workflow: gen-data, train, sample, validate, hyperparams.

Every command takes --config (INI per config.SCHEMA) plus optional --seed
and --out overrides, and is deterministic under a fixed config and seed.
Artifacts (datasets, checkpoints, sample sets) carry no timestamps, so
reruns produce byte-identical files. Exit codes: 0 success, 2 config or
usage error, 3 numeric failure, 4 I/O or corrupt-artifact error.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from . import config as cfgmod
from . import dataset as ds_mod
from .container import canonical_json
from .errors import (AllWeightsZeroError, ConfigError, CorruptPayloadError,
                     CsdmError, DegenerateRangeError, NonFiniteLossError,
                     NonFiniteStateError, SingularCovarianceError,
                     SingularSystemError, VersionMismatchError)
from .fields import minmax_apply
from .measurement import TruncatedGaussianMeasurement
from .oracle import (compare_summaries, ensemble_predictions,
                     importance_posterior, save_log_weights_csv)
from .rng import derive_rng
from .sampler import (annealed_langevin, check_epsilon, epsilon_grid_search,
                      model_score_fn, posterior_stats)
from .schedule import check_gamma, suggest_sigma1
from .scorenet import load_checkpoint, save_checkpoint, train


def emit_heatmap(field: np.ndarray, path, lo: float, hi: float) -> None:
    """8-bit grayscale PGM (P5): lo maps to 0, hi to 255, values clamped.

    Row order is flipped so increasing grid y points up in the image.
    """
    if hi <= lo:
        raise DegenerateRangeError(f"empty heatmap range [{lo}, {hi}]")
    a = np.asarray(field, dtype=np.float64)
    if a.ndim != 2:
        raise ConfigError(f"heatmap wants a 2-D field, got shape {a.shape}")
    scaled = np.clip((a - lo) / (hi - lo) * 255.0, 0.0, 255.0)
    pixels = np.rint(scaled).astype(np.uint8)[::-1]
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        fh.write(pixels.tobytes())


def _header_digest(header: dict) -> str:
    return hashlib.blake2b(canonical_json(header), digest_size=16).hexdigest()


def _out_dir(cfg) -> str:
    out = cfg.get("run", "out")
    os.makedirs(out, exist_ok=True)
    return out


def cmd_gen_data(cfg) -> int:
    out = _out_dir(cfg)
    prior = cfgmod.build_prior(cfg)
    grid = cfgmod.build_grid(cfg, prior)
    physics = cfgmod.build_physics(cfg)
    measurement = cfgmod.build_measurement(cfg)
    data = ds_mod.generate(prior, physics, measurement,
                           n=cfg.get("dataset", "n_train"),
                           seed=cfg.get("run", "seed"), grid=grid)
    path = os.path.join(out, "dataset.csdm")
    ds_mod.save(data, path)
    h = data.header
    print(f"dataset: {path}")
    print(f"n={h['n']} grid={grid.nx}x{grid.ny} "
          f"x_channels={h['x_channels']} y_channels={h['y_channels']}")
    print(f"prior={h['prior']['kind']} physics={h['physics']['kind']} "
          f"measurement={h['measurement']['kind']}")
    print(f"u_max={h['u_max']:.8g} seed={h['seed']}")
    print(f"header_digest={_header_digest(h)}")
    return 0


def _train_data_meta(header: dict) -> dict:
    keys = ("grid", "x_channels", "y_channels", "x_transform", "x_ref",
            "stats_x", "stats_y", "u_max", "prior", "physics", "measurement")
    meta = {k: header[k] for k in keys}
    meta["dataset_header_digest"] = _header_digest(header)
    return meta


def cmd_train(cfg, data_path: str) -> int:
    out = _out_dir(cfg)
    data = ds_mod.load(data_path)
    schedule = cfgmod.build_schedule(cfg)
    net_cfg = cfgmod.build_net_config(cfg, data.x.shape[1], data.y.shape[1])
    train_cfg = cfgmod.build_train_config(cfg)
    meta = _train_data_meta(data.header)
    ckpt_path = os.path.join(out, "checkpoint.csmw")
    loss_path = os.path.join(out, "loss.csv")

    total = train_cfg.iterations
    chunk = max(1, cfg.get("train", "checkpoint_every"))
    trace: list = []
    state = None
    done = 0
    try:
        while done < total:
            step = min(chunk, total - done)
            part_cfg = cfgmod.TrainConfig(
                iterations=step, batch_size=train_cfg.batch_size,
                lr=train_cfg.lr, lr_final=train_cfg.lr_final,
                ema_decay=train_cfg.ema_decay, seed=train_cfg.seed)
            result = train(data, net_cfg, part_cfg, schedule, data_meta=meta,
                           resume=state)
            state = result.state
            trace.extend(result.loss_trace)
            done += step
            save_checkpoint(ckpt_path, result, net_cfg, part_cfg, schedule,
                            data_meta=meta)
    except NonFiniteLossError:
        _write_loss_csv(loss_path, trace)
        raise
    _write_loss_csv(loss_path, trace)
    print(f"checkpoint: {ckpt_path}")
    print(f"loss_csv: {loss_path}")
    print(f"iterations={done} first_loss={trace[0][1]:.6g} "
          f"last_loss={trace[-1][1]:.6g}")
    return 0


def _write_loss_csv(path, trace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,loss\n")
        for it, loss in trace:
            fh.write(f"{it},{loss:.17g}\n")


def _check_compat(meta: dict, header: dict) -> None:
    if not meta:
        return
    for key in ("grid", "y_channels", "stats_y"):
        if key in meta and canonical_json(meta[key]) != canonical_json(header[key]):
            raise ConfigError(
                f"checkpoint/dataset mismatch on {key}: the checkpoint was "
                f"trained against different data")


def cmd_sample(cfg, checkpoint_path: str, data_path: str, index: int) -> int:
    out = _out_dir(cfg)
    model, ck_header, _ = load_checkpoint(checkpoint_path)
    data = ds_mod.load(data_path)
    _check_compat(ck_header.get("data_meta", {}), data.header)
    if not 0 <= index < data.n:
        raise ConfigError(f"record index {index} outside dataset of {data.n}")

    y_hat = data.y[index].astype(np.float64)
    sampler_cfg = cfgmod.build_sampler_config(cfg)
    shape = (data.x.shape[1],) + data.x.shape[2:]
    samples = annealed_langevin(model_score_fn(model), y_hat, model.schedule,
                                sampler_cfg, shape)
    summary = posterior_stats(samples)

    grid = data.grid
    meas_digest = hashlib.blake2b(
        np.ascontiguousarray(data.y[index]).tobytes(), digest_size=16).hexdigest()
    extra = {
        "measurement_digest": meas_digest,
        "source_dataset_digest": _header_digest(data.header),
        "record_index": int(index),
        "checkpoint_iteration": int(ck_header["iteration"]),
        "sampler": sampler_cfg.to_dict(),
        "schedule": {"sigma1": model.schedule.sigma1,
                     "sigmaL": model.schedule.sigmaL, "L": model.schedule.L},
    }
    sample_path = os.path.join(out, "samples.csdm")
    ds_mod.save_samples(sample_path, samples.astype(np.float32), grid, extra)

    emit_heatmap(summary.mean[0], os.path.join(out, "mean.pgm"), 0.0, 1.0)
    emit_heatmap(summary.std[0], os.path.join(out, "std.pgm"), 0.0, 0.5)
    csv_path = os.path.join(out, "summary.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("channel,iy,ix,mean,std\n")
        for c in range(summary.mean.shape[0]):
            for iy in range(summary.mean.shape[1]):
                for ix in range(summary.mean.shape[2]):
                    fh.write(f"{c},{iy},{ix},{summary.mean[c, iy, ix]:.17g},"
                             f"{summary.std[c, iy, ix]:.17g}\n")
    print(f"samples: {sample_path}")
    print(f"summary_csv: {csv_path}")
    print(f"n_samples={summary.n} mean_range=[{summary.mean.min():.6g}, "
          f"{summary.mean.max():.6g}] std_max={summary.std.max():.6g}")
    print(f"measurement_digest={meas_digest}")
    return 0


def cmd_validate(cfg, checkpoint_path: str, data_path: str) -> int:
    out = _out_dir(cfg)
    model, ck_header, _ = load_checkpoint(checkpoint_path)
    data = ds_mod.load(data_path)
    _check_compat(ck_header.get("data_meta", {}), data.header)
    header = data.header
    seed = cfg.get("run", "seed")
    index = cfg.get("validate", "index")
    if not 0 <= index < data.n:
        raise ConfigError(f"validate.index {index} outside dataset of {data.n}")

    grid = data.grid
    prior = ds_mod.prior_from_dict(header["prior"])
    physics = ds_mod.physics_from_dict(header["physics"])
    stats_x, stats_y, u_max = data.stats_x, data.stats_y, data.u_max

    truth = prior.render(data.latents[index].astype(np.float64), grid)
    clean = physics.predict(truth)

    n_e = cfg.get("validate", "ensemble")
    latents, fields, moduli = [], [], []
    for j in range(n_e):
        s = prior.sample(derive_rng(seed, 9, j), grid)
        latents.append(s.latent)
        moduli.append(s.modulus)
        xn = minmax_apply(ds_mod.transform_x(s.modulus, header["x_transform"],
                                             header["x_ref"]), stats_x)
        fields.append(xn)
    latents = np.stack(latents)
    fields = np.stack(fields)
    predictions = ensemble_predictions(moduli, physics)

    sampler_cfg = cfgmod.build_sampler_config(cfg)
    shape = (data.x.shape[1],) + data.x.shape[2:]
    rows = []
    for frac in cfgmod.validate_noise_fracs(cfg):
        meas = TruncatedGaussianMeasurement(sigma_frac=frac)
        y_raw = meas.apply(clean, derive_rng(seed, 8, int(round(frac * 1e6))),
                           u_scale=u_max)
        sigma_abs = frac * u_max
        is_summary, ess, ens = importance_posterior(
            latents, fields, y_raw.data, sigma_abs, predictions=predictions)
        save_log_weights_csv(
            os.path.join(out, f"oracle_logw_{frac:g}.csv"), ens.log_weights)

        y_hat = minmax_apply(y_raw.data, stats_y)
        samples = annealed_langevin(model_score_fn(model), y_hat,
                                    model.schedule, sampler_cfg, shape)
        cs_summary = posterior_stats(samples)
        rmse_mean, rmse_std = compare_summaries(cs_summary, is_summary)
        std_l2 = float(np.linalg.norm(cs_summary.std))
        rows.append((frac, rmse_mean, rmse_std, ess, std_l2))
        print(f"noise={frac:g} rmse_mean={rmse_mean:.6g} "
              f"rmse_std={rmse_std:.6g} ess={ess:.1f} csdm_std_l2={std_l2:.6g}")

    csv_path = os.path.join(out, "validate.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("noise_frac,rmse_mean,rmse_std,ess,csdm_std_l2,"
                 "n_samples,n_ensemble\n")
        for frac, rm, rs, ess, sl in rows:
            fh.write(f"{frac:g},{rm:.17g},{rs:.17g},{ess:.17g},{sl:.17g},"
                     f"{sampler_cfg.n_samples},{n_e}\n")
    print(f"report: {csv_path}")
    return 0


def cmd_hyperparams(cfg, data_path: str | None) -> int:
    schedule = cfgmod.build_schedule(cfg)
    nx, ny = cfg.get("grid", "nx"), cfg.get("grid", "ny")
    dim = nx * ny
    T = cfg.get("sample", "steps_per_level")
    eps = cfg.get("sample", "epsilon")

    if data_path:
        data = ds_mod.load(data_path)
        print(f"suggest_sigma1 = "
              f"{suggest_sigma1(data.x.reshape(data.n, -1)):.8g}")
    print(f"sigma1 = {schedule.sigma1:.8g}")
    print(f"sigmaL = {schedule.sigmaL:.8g}")
    print(f"levels = {schedule.L}")
    print(f"gamma = {schedule.gamma:.8g}")
    print(f"check_gamma = {check_gamma(schedule.gamma, dim):.8g}")
    print(f"check_epsilon_squared = "
          f"{check_epsilon(eps, schedule.sigmaL, schedule.gamma, T):.8g}")
    print(f"check_epsilon_printed = "
          f"{check_epsilon(eps, schedule.sigmaL, schedule.gamma, T, form='printed'):.8g}")
    rec = epsilon_grid_search(schedule.sigmaL, schedule.gamma, T)
    print(f"recommended_epsilon = {rec:.8g}")
    print(f"recommended_epsilon_stat = "
          f"{check_epsilon(rec, schedule.sigmaL, schedule.gamma, T):.8g}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csdm",
        description="Grid-valued Bayesian inversion with conditional "
                    "score-based sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="INI config path")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=None, help="override run.out")

    common(sub.add_parser("gen-data", help="generate a training dataset"))
    p_train = sub.add_parser("train", help="train the conditional score network")
    common(p_train)
    p_train.add_argument("--data", default=None, help="dataset path "
                         "(default <out>/dataset.csdm)")
    p_sample = sub.add_parser("sample", help="draw posterior samples")
    common(p_sample)
    p_sample.add_argument("--checkpoint", default=None,
                          help="checkpoint path (default <out>/checkpoint.csmw)")
    p_sample.add_argument("--data", default=None)
    p_sample.add_argument("--index", type=int, default=0,
                          help="dataset record supplying the measurement")
    p_val = sub.add_parser("validate", help="compare posterior against the "
                           "importance-sampling reference")
    common(p_val)
    p_val.add_argument("--checkpoint", default=None)
    p_val.add_argument("--data", default=None)
    p_hyp = sub.add_parser("hyperparams", help="schedule and step-size "
                           "diagnostics")
    common(p_hyp)
    p_hyp.add_argument("--data", default=None)
    return parser


def _dispatch(args) -> int:
    cfg = cfgmod.RunConfig.from_file(args.config).with_overrides(
        seed=args.seed, out=args.out)
    out = cfg.get("run", "out")
    data_default = os.path.join(out, "dataset.csdm")
    ckpt_default = os.path.join(out, "checkpoint.csmw")
    if args.command == "gen-data":
        return cmd_gen_data(cfg)
    if args.command == "train":
        return cmd_train(cfg, args.data or data_default)
    if args.command == "sample":
        return cmd_sample(cfg, args.checkpoint or ckpt_default,
                          args.data or data_default, args.index)
    if args.command == "validate":
        return cmd_validate(cfg, args.checkpoint or ckpt_default,
                            args.data or data_default)
    if args.command == "hyperparams":
        return cmd_hyperparams(cfg, args.data)
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    threads = os.environ.get("CSDM_THREADS", "1")
    try:
        n_threads = max(1, int(threads))
    except ValueError:
        print(f"csdm: bad CSDM_THREADS value {threads!r}", file=sys.stderr)
        return 2
    import torch
    torch.set_num_threads(n_threads)

    args = _build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (NonFiniteLossError, NonFiniteStateError, SingularSystemError,
            SingularCovarianceError, AllWeightsZeroError) as exc:
        print(f"csdm: numeric failure: {exc}", file=sys.stderr)
        return 3
    except (CorruptPayloadError, VersionMismatchError) as exc:
        print(f"csdm: bad artifact: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"csdm: i/o error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, CsdmError, ValueError) as exc:
        print(f"csdm: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
