"""Convolutional encoder / per-step decoder network with an exact backward pass.

Layout of one forward pass for a window x (C x L_in) and the calendar
vectors of its d prediction hours:

    conv -> ReLU (repeated, valid padding, strided windows end-aligned) -> flatten -> linear F -> ReLU
         -> d parallel linears F -> F' -> ReLU
         -> for each step k: MLP([recon_k, calendar_k]) -> scalar

All parameters live in one flat float64 vector described by a ParamLayout.
The vector also carries the per-output log noise precisions and the log
prior precision so a particle is a single array.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError

LAYOUT_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    n_channels: int = 33
    n_calendar: int = 32
    input_length: int = 144
    conv_specs: tuple[tuple[int, int, int], ...] = ((16, 7, 2), (32, 5, 2), (32, 3, 2))
    encoder_dim: int = 64
    recon_dim: int = 32
    decoder_hidden: tuple[int, ...] = (64,)
    horizon: int = 6

    def __post_init__(self):
        object.__setattr__(self, "conv_specs", tuple(tuple(int(v) for v in s) for s in self.conv_specs))
        object.__setattr__(self, "decoder_hidden", tuple(int(v) for v in self.decoder_hidden))
        dims = [self.n_channels, self.n_calendar, self.input_length, self.encoder_dim, self.recon_dim, self.horizon]
        if min(dims) < 1 or any(v < 1 for v in self.decoder_hidden):
            raise ConfigError(f"all architecture dimensions must be >= 1: {self}")
        for spec in self.conv_specs:
            if len(spec) != 3 or min(spec) < 1:
                raise ConfigError(f"conv spec must be (out_channels, kernel, stride) >= 1, got {spec}")
        lengths = self.conv_lengths()
        if lengths[-1] < 1:
            raise ConfigError(f"conv stack leaves no output positions: lengths {lengths}")

    def conv_lengths(self) -> list[int]:
        lengths = [self.input_length]
        for _, kernel, stride in self.conv_specs:
            lengths.append((lengths[-1] - kernel) // stride + 1)
            if lengths[-1] < 1:
                break
        return lengths

    @property
    def flat_dim(self) -> int:
        channels = self.conv_specs[-1][0] if self.conv_specs else self.n_channels
        return channels * self.conv_lengths()[-1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_specs"] = [list(s) for s in self.conv_specs]
        d["decoder_hidden"] = list(self.decoder_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(**d)


@dataclass(frozen=True)
class Block:
    name: str
    offset: int
    shape: tuple[int, ...]
    kind: str  # "w", "noise" or "alpha"

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def slice(self) -> slice:
        return slice(self.offset, self.offset + self.size)


@dataclass(frozen=True)
class ParamLayout:
    arch: ArchConfig
    blocks: tuple[Block, ...] = field(repr=False)

    @classmethod
    def from_arch(cls, arch: ArchConfig) -> "ParamLayout":
        specs = []
        c_in = arch.n_channels
        for i, (c_out, kernel, _) in enumerate(arch.conv_specs):
            specs.append((f"conv{i}.weight", (c_out, c_in, kernel), "w"))
            specs.append((f"conv{i}.bias", (c_out,), "w"))
            c_in = c_out
        specs.append(("encoder.weight", (arch.encoder_dim, arch.flat_dim), "w"))
        specs.append(("encoder.bias", (arch.encoder_dim,), "w"))
        specs.append(("recon.weight", (arch.horizon, arch.recon_dim, arch.encoder_dim), "w"))
        specs.append(("recon.bias", (arch.horizon, arch.recon_dim), "w"))
        fan = arch.recon_dim + arch.n_calendar
        for i, width in enumerate(arch.decoder_hidden + (1,)):
            specs.append((f"decoder{i}.weight", (width, fan), "w"))
            specs.append((f"decoder{i}.bias", (width,), "w"))
            fan = width
        specs.append(("log_noise_precision", (arch.horizon,), "noise"))
        specs.append(("log_alpha", (1,), "alpha"))
        blocks, offset = [], 0
        for name, shape, kind in specs:
            blocks.append(Block(name, offset, shape, kind))
            offset += math.prod(shape)
        return cls(arch, tuple(blocks))

    @property
    def size(self) -> int:
        last = self.blocks[-1]
        return last.offset + last.size

    @property
    def n_weights(self) -> int:
        return sum(b.size for b in self.blocks if b.kind == "w")

    @property
    def weight_slice(self) -> slice:
        # network blocks are laid out first and contiguously
        return slice(0, self.n_weights)

    @property
    def noise_slice(self) -> slice:
        return self.block("log_noise_precision").slice

    @property
    def alpha_index(self) -> int:
        return self.block("log_alpha").offset

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def unpack(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        """Reshaped views into ``theta`` keyed by block name."""
        return {b.name: theta[b.slice].reshape(b.shape) for b in self.blocks}

    def to_json_dict(self) -> dict:
        return {
            "version": LAYOUT_VERSION,
            "dtype": "<f8",
            "size": self.size,
            "arch": self.arch.to_dict(),
            "blocks": [
                {"name": b.name, "offset": b.offset, "shape": list(b.shape), "kind": b.kind} for b in self.blocks
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ParamLayout":
        if d.get("version") != LAYOUT_VERSION:
            raise ContractError(f"unsupported layout version {d.get('version')!r}")
        layout = cls.from_arch(ArchConfig.from_dict(d["arch"]))
        stored = [(b["name"], b["offset"], tuple(b["shape"])) for b in d["blocks"]]
        if stored != [(b.name, b.offset, b.shape) for b in layout.blocks]:
            raise ContractError("layout sidecar does not match the layout implied by its architecture")
        return layout


@dataclass
class ParticleState:
    theta: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.layout.size,):
            raise ContractError(f"theta has shape {self.theta.shape}, layout expects ({self.layout.size},)")

    @property
    def noise_precision(self) -> np.ndarray:
        return np.exp(self.theta[self.layout.noise_slice])

    @property
    def alpha(self) -> float:
        return float(np.exp(self.theta[self.layout.alpha_index]))


def init_theta(layout: ParamLayout, rng: np.random.Generator) -> np.ndarray:
    """Fan-in scaled uniform weights, zero biases, unit precisions."""
    theta = np.zeros(layout.size)
    weights = [b for b in layout.blocks if b.name.endswith(".weight")]
    for b in weights:
        fan_in = math.prod(b.shape[1:]) if b.name != "recon.weight" else b.shape[2]
        # He-uniform ahead of a ReLU, unit-variance-preserving for the output layer
        gain = 3.0 if b is weights[-1] else 6.0
        bound = math.sqrt(gain / fan_in)
        theta[b.slice] = rng.uniform(-bound, bound, size=b.size)
    return theta


def init_particle(arch: ArchConfig, seed) -> ParticleState:
    layout = ParamLayout.from_arch(arch)
    return ParticleState(init_theta(layout, np.random.default_rng(seed)), layout)


def _as_batch(arch: ArchConfig, x, cal):
    x = np.asarray(x, dtype=np.float64)
    cal = np.asarray(cal, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x, cal = x[None], cal[None]
    if x.ndim != 3 or x.shape[1:] != (arch.n_channels, arch.input_length):
        raise ContractError(f"input shape {x.shape} does not match (B, {arch.n_channels}, {arch.input_length})")
    if cal.shape != (x.shape[0], arch.horizon, arch.n_calendar):
        raise ContractError(
            f"target_calendar shape {cal.shape} does not match ({x.shape[0]}, {arch.horizon}, {arch.n_calendar})"
        )
    return x, cal, single


def _relu(a):
    return np.maximum(a, 0.0)


def network_forward(layout: ParamLayout, theta: np.ndarray, x: np.ndarray, cal: np.ndarray, keep: bool = False):
    """Batched forward on (B, C, L) inputs and (B, d, C_cal) calendars.

    Returns the (B, d) outputs, and the activation cache when ``keep``.
    """
    arch = layout.arch
    p = layout.unpack(theta)
    B = x.shape[0]
    cache = {"convs": []}
    a = np.ascontiguousarray(x.transpose(0, 2, 1))  # channels last: (B, L, C)
    for i, (c_out, kernel, stride) in enumerate(arch.conv_specs):
        W = p[f"conv{i}.weight"]
        # windows are anchored at the latest time step; leftover leading steps are dropped
        offset = (a.shape[1] - kernel) % stride
        cols = sliding_window_view(a, kernel, axis=1)[:, offset::stride]  # (B, Lout, C, k)
        l_out = cols.shape[1]
        cols = cols.reshape(B, l_out, -1)
        z = cols @ W.reshape(c_out, -1).T + p[f"conv{i}.bias"]
        if keep:
            cache["convs"].append((a.shape, cols, z > 0))
        a = _relu(z)
    flat = a.reshape(B, -1)
    h = _relu(flat @ p["encoder.weight"].T + p["encoder.bias"])
    d, f_rec, f_enc = p["recon.weight"].shape
    r = _relu(h @ p["recon.weight"].reshape(d * f_rec, f_enc).T + p["recon.bias"].reshape(-1)).reshape(B, d, f_rec)
    u = np.concatenate([r, cal], axis=2).reshape(B * d, -1)
    dec_inputs = []
    n_dec = len(arch.decoder_hidden) + 1
    for i in range(n_dec):
        dec_inputs.append(u)
        u = u @ p[f"decoder{i}.weight"].T + p[f"decoder{i}.bias"]
        if i < n_dec - 1:
            u = _relu(u)
    out = u.reshape(B, d)
    if not keep:
        return out
    cache.update(flat=flat, h=h, r=r, dec_inputs=dec_inputs)
    return out, cache


def network_backward(layout: ParamLayout, theta: np.ndarray, cache, output_grad: np.ndarray) -> np.ndarray:
    """Gradient of sum(output * output_grad) w.r.t. theta (zeros outside network blocks)."""
    arch = layout.arch
    p = layout.unpack(theta)
    grad = np.zeros(layout.size)
    g = layout.unpack(grad)
    B, d = output_grad.shape
    f_rec = arch.recon_dim

    du = output_grad.reshape(B * d, 1)
    n_dec = len(arch.decoder_hidden) + 1
    for i in reversed(range(n_dec)):
        inp = cache["dec_inputs"][i]
        g[f"decoder{i}.weight"][...] = du.T @ inp
        g[f"decoder{i}.bias"][...] = du.sum(axis=0)
        du = du @ p[f"decoder{i}.weight"]
        if i > 0:
            du = du * (inp > 0)
    r = cache["r"]
    dr = du.reshape(B, d, -1)[:, :, :f_rec] * (r > 0)
    dr = dr.reshape(B, d * f_rec)
    h = cache["h"]
    g["recon.weight"][...] = (dr.T @ h).reshape(d, f_rec, -1)
    g["recon.bias"][...] = dr.sum(axis=0).reshape(d, f_rec)
    dh = dr @ p["recon.weight"].reshape(d * f_rec, -1) * (h > 0)
    g["encoder.weight"][...] = dh.T @ cache["flat"]
    g["encoder.bias"][...] = dh.sum(axis=0)
    da = dh @ p["encoder.weight"]
    for i in reversed(range(len(arch.conv_specs))):
        c_out, kernel, stride = arch.conv_specs[i]
        in_shape, cols, mask = cache["convs"][i]
        dz = da.reshape(mask.shape) * mask  # (B, Lout, O)
        l_out = dz.shape[1]
        dz2 = dz.reshape(-1, c_out)
        g[f"conv{i}.weight"][...] = (dz2.T @ cols.reshape(-1, cols.shape[-1])).reshape(c_out, in_shape[2], kernel)
        g[f"conv{i}.bias"][...] = dz2.sum(axis=0)
        if i == 0:
            break
        dcols = (dz @ p[f"conv{i}.weight"].reshape(c_out, -1)).reshape(B, l_out, in_shape[2], kernel)
        da = np.zeros(in_shape)
        offset = (in_shape[1] - kernel) % stride
        span = stride * (l_out - 1) + 1
        for j in range(kernel):
            da[:, offset + j : offset + j + span : stride, :] += dcols[:, :, :, j]
    return grad


def forward(p: ParticleState, x, target_calendar) -> np.ndarray:
    """Network output for one window ((C, L) -> (d,)) or a batch ((B, C, L) -> (B, d))."""
    xb, cb, single = _as_batch(p.layout.arch, x, target_calendar)
    out = network_forward(p.layout, p.theta, xb, cb)
    return out[0] if single else out


def backward(p: ParticleState, x, target_calendar, output_grad) -> np.ndarray:
    """Gradient of <f_w(x), output_grad> w.r.t. theta, summed over a batch."""
    xb, cb, single = _as_batch(p.layout.arch, x, target_calendar)
    og = np.asarray(output_grad, dtype=np.float64)
    if single:
        og = og[None]
    if og.shape != (xb.shape[0], p.layout.arch.horizon):
        raise ContractError(f"output_grad shape {og.shape} does not match ({xb.shape[0]}, {p.layout.arch.horizon})")
    _, cache = network_forward(p.layout, p.theta, xb, cb, keep=True)
    return network_backward(p.layout, p.theta, cache, og)


def save_particle(p: ParticleState, path: str | Path) -> None:
    """Write ``<path>.bin`` (little-endian float64) and ``<path>.json`` (layout)."""
    path = Path(path)
    path.with_suffix(".bin").write_bytes(p.theta.astype("<f8").tobytes())
    path.with_suffix(".json").write_text(json.dumps(p.layout.to_json_dict(), indent=2, sort_keys=True) + "\n")


def load_particle(path: str | Path) -> ParticleState:
    path = Path(path)
    layout = ParamLayout.from_json_dict(json.loads(path.with_suffix(".json").read_text()))
    theta = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8").astype(np.float64)
    return ParticleState(theta, layout)
