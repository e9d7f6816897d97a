"""Conditional noise predictor eps(x_t, t, c) as a small fully connected net.

The input is ``[x, sinusoidal(t), embed(c)]``; hidden layers use SiLU and the
output layer is linear. Condition index ``num_conditions`` is a learned NULL
row used for classifier-free guidance. All weights live in one flat float64
vector so the optimizer and the checkpoint writer see a single array.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_bytes
from .errors import DomainError, FormatError

NULL = -1
CKPT_MAGIC = b"RDIFCKPT"
CKPT_VERSION = 1


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class GradientBundle:
    loss: float
    grads: np.ndarray


@dataclass(eq=False)
class DenoiserModel:
    data_dim: int = 2
    num_conditions: int = 8
    time_embed_dim: int = 16
    cond_embed_dim: int = 8
    hidden_widths: tuple[int, ...] = (128, 128, 128)
    params: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)
        for name in ("data_dim", "num_conditions", "time_embed_dim", "cond_embed_dim"):
            if int(getattr(self, name)) < 1:
                raise DomainError(f"{name} must be positive")
        if self.time_embed_dim % 2:
            raise DomainError("time_embed_dim must be even (sin/cos pairs)")
        if not self.hidden_widths or min(self.hidden_widths) < 1:
            raise DomainError("hidden_widths must be a nonempty list of positive ints")
        self._layout = self._build_layout()
        half = self.time_embed_dim // 2
        self._freqs = np.geomspace(1.0, 200.0, half) if half > 1 else np.ones(1)
        if self.params is None:
            self.params = np.zeros(self.num_params)
        else:
            self.params = np.ascontiguousarray(self.params, dtype=np.float64)
            if self.params.shape != (self.num_params,):
                raise DomainError(
                    f"expected {self.num_params} parameters, got {self.params.shape}"
                )

    # ---- layout -------------------------------------------------------

    @property
    def input_dim(self) -> int:
        return self.data_dim + self.time_embed_dim + self.cond_embed_dim

    def _shapes(self):
        shapes = [(self.num_conditions + 1, self.cond_embed_dim)]
        fan_in = self.input_dim
        for width in (*self.hidden_widths, self.data_dim):
            shapes.append((fan_in, width))
            shapes.append((width,))
            fan_in = width
        return shapes

    def _build_layout(self):
        layout, offset = [], 0
        for shape in self._shapes():
            size = int(np.prod(shape))
            layout.append((offset, offset + size, shape))
            offset += size
        return layout

    @property
    def num_params(self) -> int:
        return self._layout[-1][1]

    def _unpack(self, flat):
        views = [flat[a:b].reshape(shape) for a, b, shape in self._layout]
        return views[0], list(zip(views[1::2], views[2::2]))

    def copy(self) -> "DenoiserModel":
        return DenoiserModel(
            self.data_dim, self.num_conditions, self.time_embed_dim,
            self.cond_embed_dim, self.hidden_widths, self.params.copy(),
        )

    @classmethod
    def initialize(cls, rng: np.random.Generator, **arch) -> "DenoiserModel":
        """Fan-in uniform init; the output layer starts at zero so eps = 0."""
        model = cls(**arch)
        table, layers = model._unpack(model.params)
        table[...] = rng.uniform(-1.0, 1.0, size=table.shape)
        for W, b in layers[:-1]:
            bound = 1.0 / np.sqrt(W.shape[0])
            W[...] = rng.uniform(-bound, bound, size=W.shape)
            b[...] = rng.uniform(-bound, bound, size=b.shape)
        return model

    # ---- evaluation ---------------------------------------------------

    def time_features(self, t):
        """Sin/cos features of t at geometrically spaced frequencies 1..200."""
        ang = np.asarray(t, dtype=float).reshape(-1, 1) * self._freqs
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    def condition_rows(self, c, n: int) -> np.ndarray:
        """Map condition ids (``NULL``/None allowed) to embedding-table rows."""
        if c is None:
            c = NULL
        arr = np.asarray(c)
        if arr.ndim == 0:
            arr = np.full(n, int(arr))
        elif arr.shape != (n,):
            raise DomainError(f"expected {n} conditions, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise DomainError("conditions must be integers")
        bad = (arr < NULL) | (arr >= self.num_conditions)
        if np.any(bad):
            raise DomainError(
                f"condition ids must be in 0..{self.num_conditions - 1} or NULL, "
                f"got {arr[bad][0]}"
            )
        return np.where(arr == NULL, self.num_conditions, arr).astype(np.int64)

    def _prepare(self, x, t, c):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = x.reshape(1, -1) if single else x
        if x2.ndim != 2 or x2.shape[1] != self.data_dim:
            raise DomainError(f"x must have trailing dimension {self.data_dim}, got {x.shape}")
        n = x2.shape[0]
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        rows = self.condition_rows(c, n)
        return x2, t_arr, rows, single

    def _forward(self, x2, t_arr, rows, params):
        table, layers = self._unpack(params)
        h = np.concatenate([x2, self.time_features(t_arr), table[rows]], axis=1)
        cache = [h]
        for W, b in layers[:-1]:
            z = h @ W + b
            h = z * _sigmoid(z)
            cache.append(z)
            cache.append(h)
        W, b = layers[-1]
        return h @ W + b, cache

    def predict_eps(self, x, t, c=NULL):
        """Noise prediction for one point ``(d,)`` or a batch ``(n, d)``.

        ``t`` is a scalar or per-row array, ``c`` a condition id, ``NULL``
        (or None) for the unconditional branch, or a per-row id array.
        """
        x2, t_arr, rows, single = self._prepare(x, t, c)
        out, _ = self._forward(x2, t_arr, rows, self.params)
        return out[0] if single else out

    def loss_and_grad(self, x_t, t, c, eps_target, params=None) -> GradientBundle:
        """Mean over the batch of ``||eps_target - eps(x_t, t, c)||^2`` and its gradient."""
        params = self.params if params is None else params
        x2, t_arr, rows, _ = self._prepare(x_t, t, c)
        target = np.asarray(eps_target, dtype=float).reshape(x2.shape)
        n = x2.shape[0]
        if n == 0:
            raise DomainError("empty batch")
        out, cache = self._forward(x2, t_arr, rows, params)
        resid = out - target
        loss = float(np.sum(resid * resid) / n)

        grads = np.zeros_like(params)
        g_table, g_layers = self._unpack(grads)
        _, layers = self._unpack(params)

        dy = (2.0 / n) * resid
        h_last = cache[-1]
        g_layers[-1][0][...] = h_last.T @ dy
        g_layers[-1][1][...] = dy.sum(axis=0)
        dh = dy @ layers[-1][0].T
        for k in range(len(layers) - 2, -1, -1):
            z = cache[2 * k + 1]
            h_in = cache[2 * k]
            s = _sigmoid(z)
            dz = dh * (s + z * s * (1.0 - s))
            g_layers[k][0][...] = h_in.T @ dz
            g_layers[k][1][...] = dz.sum(axis=0)
            dh = dz @ layers[k][0].T
        d_cond = dh[:, self.data_dim + self.time_embed_dim:]
        np.add.at(g_table, rows, d_cond)
        return GradientBundle(loss, grads)

    # ---- serialization -----------------------------------------------

    def to_bytes(self) -> bytes:
        ints = [self.data_dim, self.num_conditions, self.time_embed_dim,
                self.cond_embed_dim, len(self.hidden_widths), *self.hidden_widths]
        header = CKPT_MAGIC + struct.pack("<B", CKPT_VERSION)
        header += struct.pack(f"<{len(ints)}I", *ints)
        header += struct.pack("<Q", self.num_params)
        return header + self.params.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DenoiserModel":
        if blob[:8] != CKPT_MAGIC:
            raise FormatError("not a checkpoint file (bad magic)")
        try:
            (version,) = struct.unpack_from("<B", blob, 8)
            if version != CKPT_VERSION:
                raise FormatError(f"unsupported checkpoint version {version}")
            d, k, te, ce, nh = struct.unpack_from("<5I", blob, 9)
            offset = 9 + 20
            widths = struct.unpack_from(f"<{nh}I", blob, offset)
            offset += 4 * nh
            (n_params,) = struct.unpack_from("<Q", blob, offset)
            offset += 8
        except struct.error as exc:
            raise FormatError(f"truncated checkpoint header: {exc}") from None
        if len(blob) != offset + 8 * n_params:
            raise FormatError("checkpoint length does not match its header")
        params = np.frombuffer(blob, dtype="<f8", offset=offset, count=n_params)
        return cls(d, k, te, ce, widths, params.astype(np.float64))

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def save_checkpoint(model: DenoiserModel, path) -> None:
    atomic_write_bytes(Path(path), model.to_bytes())


def load_checkpoint(path) -> DenoiserModel:
    return DenoiserModel.from_bytes(Path(path).read_bytes())
