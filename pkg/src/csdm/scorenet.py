"""Conditional score network, denoising score-matching loss, and training.

The network s(x_tilde, y, sigma; theta) is a compact encoder-decoder CNN:
the noisy field and the measurement are concatenated along channels, three
(configurable) resolution levels with skip connections, and a dilated-conv
bottleneck. The noise level enters twice: the last-layer output is divided
by sigma, and a normalized log-sigma channel is appended to the input (the
output scaling alone cannot represent the per-level score; see the
schedule-conditioning note in ScoreNet).

Training minimizes the DSM objective

    E_j E_i 1/2 || sigma_j s(x_i + sigma_j z, y_i, sigma_j) + z ||^2

with per-example uniform level draws (an exact full-sum mode over all
levels exists for small L), Adam, and an exponential moving average
theta' <- m theta' + (1 - m) theta of the weights; the EMA weights are the
ones used for sampling. All randomness is numpy-seeded, so runs reproduce
bitwise on CPU.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn as nn

from . import container
from .errors import NonFiniteLossError
from .rng import derive_rng
from .schedule import NoiseSchedule, make_schedule

CHECKPOINT_MAGIC = b"CSMW"


@dataclass(frozen=True)
class ScoreNetConfig:
    x_channels: int = 1
    y_channels: int = 1
    width: int = 32
    depth: int = 3          # resolution levels; 1 = no down/upsampling
    dilations: tuple = (2, 4)

    def __post_init__(self):
        if self.x_channels < 1 or self.y_channels < 0:
            raise ValueError("need x_channels >= 1 and y_channels >= 0")
        if self.depth < 1 or self.width < 1:
            raise ValueError("depth and width must be positive")

    def to_dict(self) -> dict:
        return {"x_channels": self.x_channels, "y_channels": self.y_channels,
                "width": self.width, "depth": self.depth,
                "dilations": list(self.dilations)}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreNetConfig":
        return cls(x_channels=int(d["x_channels"]), y_channels=int(d["y_channels"]),
                   width=int(d["width"]), depth=int(d["depth"]),
                   dilations=tuple(d["dilations"]))


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 1000
    batch_size: int = 128
    lr: float = 1e-4
    lr_final: float | None = None  # geometric decay toward this rate; None = constant
    ema_decay: float = 0.999
    seed: int = 0
    exact_levels: bool = False   # sum over every level (tests, small L only)
    log_every: int = 50

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "batch_size": self.batch_size,
                "lr": self.lr, "lr_final": self.lr_final,
                "ema_decay": self.ema_decay, "seed": self.seed,
                "exact_levels": self.exact_levels, "log_every": self.log_every}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        lrf = d.get("lr_final")
        return cls(iterations=int(d["iterations"]), batch_size=int(d["batch_size"]),
                   lr=float(d["lr"]), lr_final=None if lrf is None else float(lrf),
                   ema_decay=float(d["ema_decay"]),
                   seed=int(d["seed"]), exact_levels=bool(d["exact_levels"]),
                   log_every=int(d["log_every"]))


def _norm(ch: int) -> nn.Module:
    g = 1
    for cand in (8, 4, 2):
        if ch % cand == 0:
            g = cand
            break
    return nn.GroupNorm(g, ch)


class _Block(nn.Module):
    """Pre-activation residual conv block with noise-level modulation.

    The embedding produces a per-channel (scale, shift) applied between the
    two convolutions; purely additive conditioning cannot rescale feature
    slopes accurately across levels, multiplicative modulation can.
    """

    def __init__(self, ch: int, emb: int, dilation: int = 1):
        super().__init__()
        self.pre = nn.Sequential(
            _norm(ch), nn.ELU(),
            nn.Conv2d(ch, ch, 3, padding=dilation, dilation=dilation))
        self.mod = nn.Linear(emb, 2 * ch)
        self.post = nn.Sequential(
            _norm(ch), nn.ELU(),
            nn.Conv2d(ch, ch, 3, padding=dilation, dilation=dilation))

    def forward(self, h, emb):
        g = self.pre(h)
        scale, shift = self.mod(emb).chunk(2, dim=1)
        g = g * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None]
        return h + self.post(g)


class ScoreNet(nn.Module):
    """Encoder-decoder score network with skip connections.

    The noise level enters twice: the raw output of the last layer is
    divided by sigma (pinning the 1/sigma growth of the score), and a
    normalized log-sigma scalar feeds a small embedding that modulates
    every block. The per-level score genuinely depends on sigma beyond the
    1/sigma factor, so output scaling alone cannot represent it across a
    wide ladder.
    """

    def __init__(self, cfg: ScoreNetConfig, sigma1: float, sigmaL: float):
        super().__init__()
        self.cfg = cfg
        self.log_s1 = math.log(sigma1)
        self.log_sL = math.log(sigmaL)
        w = cfg.width
        emb = 2 * w
        cin = cfg.x_channels + cfg.y_channels

        self.embed = nn.Sequential(nn.Linear(1, emb), nn.ELU(), nn.Linear(emb, emb))
        self.stem = nn.Conv2d(cin, w, 3, padding=1)
        widths = [w * 2 ** i for i in range(cfg.depth)]
        self.enc = nn.ModuleList([_Block(c, emb) for c in widths])
        self.down = nn.ModuleList([
            nn.Conv2d(widths[i], widths[i + 1], 3, stride=2, padding=1)
            for i in range(cfg.depth - 1)])
        self.mid = nn.ModuleList([_Block(widths[-1], emb, d) for d in cfg.dilations])
        self.up = nn.ModuleList([
            nn.Conv2d(widths[i + 1], widths[i], 3, padding=1)
            for i in range(cfg.depth - 1)])
        self.dec_merge = nn.ModuleList([
            nn.Conv2d(2 * widths[i], widths[i], 3, padding=1)
            for i in range(cfg.depth - 1)])
        self.dec = nn.ModuleList([_Block(widths[i], emb) for i in range(cfg.depth - 1)])
        self.head = nn.Sequential(_norm(w), nn.ELU(),
                                  nn.Conv2d(w, cfg.x_channels, 3, padding=1))
        # per-level gain/offset of the raw output: the loss is insensitive
        # to small-sigma output errors (they cost ~sigma^2), so these slow
        # modes get dedicated parameters instead of hiding in the trunk
        self.out_mod = nn.Linear(emb, 2 * cfg.x_channels)

    def forward(self, x_tilde: torch.Tensor, y: torch.Tensor | None,
                sigma: torch.Tensor) -> torch.Tensor:
        sigma = sigma.to(x_tilde.dtype).view(-1)
        denom = self.log_s1 - self.log_sL
        if denom == 0.0:
            denom = 1.0
        lvl = ((torch.log(sigma) - self.log_sL) / denom).view(-1, 1)
        emb = self.embed(lvl)

        if self.cfg.y_channels:
            h = self.stem(torch.cat([x_tilde, y], dim=1))
        else:
            h = self.stem(x_tilde)

        skips = []
        for i, blk in enumerate(self.enc):
            h = blk(h, emb)
            if i < len(self.down):
                skips.append(h)
                h = self.down[i](h)
        for blk in self.mid:
            h = blk(h, emb)
        for i in reversed(range(len(self.up))):
            h = torch.nn.functional.interpolate(h, scale_factor=2, mode="nearest")
            h = self.up[i](h)
            h = self.dec[i](self.dec_merge[i](torch.cat([h, skips[i]], dim=1)), emb)
        raw = self.head(h)
        gain, bias = self.out_mod(emb).chunk(2, dim=1)
        raw = raw * (1.0 + gain[:, :, None, None]) + bias[:, :, None, None]
        return raw / sigma.view(-1, 1, 1, 1)


def init_parameters(net: nn.Module, rng: np.random.Generator):
    """Fan-in uniform init drawn from a numpy stream (bitwise-reproducible
    regardless of torch version defaults)."""
    with torch.no_grad():
        for name, p in net.named_parameters():
            if p.ndim > 1:
                fan_in = int(np.prod(p.shape[1:]))
            else:
                fan_in = max(int(p.shape[0]), 1)
            bound = 1.0 / math.sqrt(fan_in)
            vals = rng.uniform(-bound, bound, size=tuple(p.shape))
            p.copy_(torch.from_numpy(vals).to(p.dtype))


def dsm_loss(net, x: torch.Tensor, y: torch.Tensor | None, sigma: torch.Tensor,
             z: torch.Tensor) -> torch.Tensor:
    """1/2 mean_i || sigma_i s(x_i + sigma_i z_i, y_i, sigma_i) + z_i ||^2.

    ``net`` is any callable (x_tilde, y, sigma) -> score. Differentiable;
    call .backward() for gradients. Injecting the exact minimizer
    s = -(x_tilde - x)/sigma^2 = -z/sigma gives exactly zero.
    """
    sv = sigma.view(-1, 1, 1, 1)
    x_tilde = x + sv * z
    s = net(x_tilde, y, sigma)
    resid = sv * s + z
    loss = 0.5 * resid.flatten(1).pow(2).sum(dim=1).mean()
    if not torch.isfinite(loss):
        raise NonFiniteLossError("DSM loss is non-finite")
    return loss


def sample_dsm_batch(rng: np.random.Generator, x: np.ndarray, y: np.ndarray,
                     schedule: NoiseSchedule, batch_size: int,
                     exact_levels: bool = False):
    """Draw (x, y, sigma, z) tensors for one DSM step.

    Per-example uniform level draws by default; in exact mode every example
    is replicated across all L levels (use only for small L).
    """
    n = x.shape[0]
    idx = rng.integers(0, n, size=batch_size)
    xb = x[idx]
    yb = y[idx]
    sig = schedule.as_array()
    if exact_levels:
        xb = np.repeat(xb, schedule.L, axis=0)
        yb = np.repeat(yb, schedule.L, axis=0)
        sigma = np.tile(sig, batch_size)
    else:
        sigma = sig[rng.integers(0, schedule.L, size=batch_size)]
    z = rng.standard_normal(size=xb.shape)
    t = lambda a: torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32))
    return t(xb), t(yb), t(sigma), t(z)


class ScoreModel:
    """Network + schedule bundle with a numpy scoring interface."""

    def __init__(self, net: ScoreNet, schedule: NoiseSchedule, meta: dict | None = None):
        self.net = net
        self.schedule = schedule
        self.meta = meta or {}

    @torch.no_grad()
    def score(self, x_tilde: np.ndarray, y: np.ndarray | None, sigma) -> np.ndarray:
        self.net.eval()
        xt = torch.from_numpy(np.ascontiguousarray(x_tilde, dtype=np.float32))
        yt = None
        if self.net.cfg.y_channels:
            yt = torch.from_numpy(np.ascontiguousarray(y, dtype=np.float32))
            if yt.shape[0] == 1 and xt.shape[0] > 1:
                yt = yt.expand(xt.shape[0], *yt.shape[1:])
        sig = np.broadcast_to(np.asarray(sigma, dtype=np.float32), (xt.shape[0],))
        out = self.net(xt, yt, torch.from_numpy(sig.copy()))
        return out.numpy()


@dataclass
class TrainResult:
    model: ScoreModel          # EMA weights (the sampling weights)
    raw_model: ScoreModel      # final non-averaged weights
    loss_trace: list           # [(iteration, loss), ...]
    iteration: int
    state: dict                # optimizer/EMA/rng state for checkpointing


def train(dataset, net_cfg: ScoreNetConfig, train_cfg: TrainConfig,
          schedule: NoiseSchedule, data_meta: dict | None = None,
          resume: dict | None = None, on_iteration=None) -> TrainResult:
    """Run (or continue) DSM training on ``dataset`` (.x/.y float32 arrays).

    ``resume`` is the ``state`` dict of a previous TrainResult / loaded
    checkpoint; iteration numbering continues where it stopped.
    """
    x = np.asarray(dataset.x, dtype=np.float32)
    y = np.asarray(dataset.y, dtype=np.float32)
    if x.shape[0] == 0:
        from .errors import EmptyDatasetError
        raise EmptyDatasetError("cannot train on an empty dataset")

    net = ScoreNet(net_cfg, schedule.sigma1, schedule.sigmaL)
    opt = torch.optim.Adam(net.parameters(), lr=train_cfg.lr)
    ema = {}
    start_iter = 0
    rng = derive_rng(train_cfg.seed, 1)

    if resume is None:
        init_parameters(net, derive_rng(train_cfg.seed, 0))
        ema = {k: v.detach().clone() for k, v in net.state_dict().items()}
    else:
        net.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in resume["params"].items()})
        ema = {k: torch.from_numpy(v.copy()) for k, v in resume["ema"].items()}
        start_iter = int(resume["iteration"])
        _load_adam(opt, net, resume)
        rng.bit_generator.state = resume["rng_state"]

    m = train_cfg.ema_decay
    trace = []
    net.train()
    for it in range(start_iter, start_iter + train_cfg.iterations):
        if train_cfg.lr_final is not None and train_cfg.iterations > 1:
            # geometric decay over this call's iterations
            frac = (it - start_iter) / (train_cfg.iterations - 1)
            lr_now = train_cfg.lr * (train_cfg.lr_final / train_cfg.lr) ** frac
            for group in opt.param_groups:
                group["lr"] = lr_now
        xb, yb, sigma, z = sample_dsm_batch(
            rng, x, y, schedule, train_cfg.batch_size, train_cfg.exact_levels)
        opt.zero_grad()
        try:
            loss = dsm_loss(net, xb, yb if net_cfg.y_channels else None, sigma, z)
        except NonFiniteLossError:
            raise NonFiniteLossError(f"DSM loss diverged at iteration {it}") from None
        loss.backward()
        opt.step()
        with torch.no_grad():
            sd = net.state_dict()
            for k, v in ema.items():
                if v.dtype.is_floating_point:
                    v.mul_(m).add_(sd[k], alpha=1.0 - m)
                else:
                    v.copy_(sd[k])
        lval = float(loss.detach())
        if it % train_cfg.log_every == 0 or it == start_iter + train_cfg.iterations - 1:
            trace.append((it, lval))
        if on_iteration is not None:
            on_iteration(it, lval)

    state = {
        "params": {k: v.detach().numpy().copy() for k, v in net.state_dict().items()},
        "ema": {k: v.numpy().copy() for k, v in ema.items()},
        "adam": _dump_adam(opt, net),
        "rng_state": rng.bit_generator.state,
        "iteration": start_iter + train_cfg.iterations,
    }

    ema_net = ScoreNet(net_cfg, schedule.sigma1, schedule.sigmaL)
    ema_net.load_state_dict(ema)
    meta = dict(data_meta or {})
    return TrainResult(
        model=ScoreModel(ema_net, schedule, meta),
        raw_model=ScoreModel(net, schedule, meta),
        loss_trace=trace,
        iteration=state["iteration"],
        state=state,
    )


def _dump_adam(opt: torch.optim.Adam, net: nn.Module) -> dict:
    names = [k for k, _ in net.named_parameters()]
    out = {"step": {}, "exp_avg": {}, "exp_avg_sq": {}}
    for name, p in zip(names, net.parameters()):
        st = opt.state.get(p)
        if not st:
            continue
        out["step"][name] = float(st["step"])
        out["exp_avg"][name] = st["exp_avg"].numpy().copy()
        out["exp_avg_sq"][name] = st["exp_avg_sq"].numpy().copy()
    return out


def _load_adam(opt: torch.optim.Adam, net: nn.Module, resume: dict):
    adam = resume["adam"]
    for name, p in net.named_parameters():
        if name in adam["step"]:
            opt.state[p] = {
                "step": torch.tensor(adam["step"][name]),
                "exp_avg": torch.from_numpy(adam["exp_avg"][name].copy()),
                "exp_avg_sq": torch.from_numpy(adam["exp_avg_sq"][name].copy()),
            }


# --- checkpoint container -------------------------------------------------

def _pack_arrays(named: list[tuple[str, np.ndarray]]):
    manifest = []
    blobs = []
    for name, arr in named:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        manifest.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    return manifest, b"".join(blobs)


def _unpack_arrays(manifest: list, payload: bytes, offset: int):
    out = {}
    for entry in manifest:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        out[entry["name"]] = arr.reshape(shape).copy()
        offset += count * 4
    return out, offset


def save_checkpoint(path, result: TrainResult, net_cfg: ScoreNetConfig,
                    train_cfg: TrainConfig, schedule: NoiseSchedule,
                    data_meta: dict | None = None):
    """Persist weights, EMA weights, optimizer moments and the training RNG
    state; loading and resuming continues the run exactly."""
    state = result.state
    sections = []
    manifests = {}
    for key, named in (
        ("params", sorted(state["params"].items())),
        ("ema", sorted(state["ema"].items())),
        ("adam_exp_avg", sorted(state["adam"]["exp_avg"].items())),
        ("adam_exp_avg_sq", sorted(state["adam"]["exp_avg_sq"].items())),
    ):
        manifest, blob = _pack_arrays(list(named))
        manifests[key] = manifest
        sections.append(blob)
    rng_state = state["rng_state"]
    header = {
        "content": "checkpoint",
        "net": net_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "schedule": schedule.to_dict(),
        "iteration": state["iteration"],
        "adam_step": state["adam"]["step"],
        "rng_state": {
            "bit_generator": rng_state["bit_generator"],
            "state": str(rng_state["state"]["state"]),
            "inc": str(rng_state["state"]["inc"]),
            "has_uint32": rng_state["has_uint32"],
            "uinteger": rng_state["uinteger"],
        },
        "manifests": manifests,
        "data_meta": data_meta or {},
    }
    container.write_container(path, CHECKPOINT_MAGIC, header, b"".join(sections))


def load_checkpoint(path):
    """Returns (model_with_ema_weights, header, state-for-resume)."""
    header, payload = container.read_container(path, CHECKPOINT_MAGIC)
    net_cfg = ScoreNetConfig.from_dict(header["net"])
    sched = header["schedule"]
    schedule = make_schedule(sched["sigma1"], sched["sigmaL"], sched["L"])

    offset = 0
    arrays = {}
    for key in ("params", "ema", "adam_exp_avg", "adam_exp_avg_sq"):
        arrays[key], offset = _unpack_arrays(header["manifests"][key], payload, offset)

    rs = header["rng_state"]
    rng_state = {
        "bit_generator": rs["bit_generator"],
        "state": {"state": int(rs["state"]), "inc": int(rs["inc"])},
        "has_uint32": int(rs["has_uint32"]),
        "uinteger": int(rs["uinteger"]),
    }
    state = {
        "params": arrays["params"],
        "ema": arrays["ema"],
        "adam": {
            "step": {k: float(v) for k, v in header["adam_step"].items()},
            "exp_avg": arrays["adam_exp_avg"],
            "exp_avg_sq": arrays["adam_exp_avg_sq"],
        },
        "rng_state": rng_state,
        "iteration": int(header["iteration"]),
    }
    net = ScoreNet(net_cfg, schedule.sigma1, schedule.sigmaL)
    net.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in arrays["ema"].items()})
    model = ScoreModel(net, schedule, dict(header.get("data_meta", {})))
    return model, header, state
