"""Feed-forward networks whose forward pass is an autodiff graph.

The forward output is differentiable both with respect to the input batch
(for equation residuals) and with respect to the parameters (for training).
Parameters live as plain numpy arrays on the MLP; each forward pass wraps
them in graph nodes so per-step graphs stay disposable.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import config

_MAGIC = b"NDCK"
_VERSION = 1

_ACTIVATIONS = {
    "tanh": ad.tanh,
    "sin": ad.sin,
    "softplus": lambda x: ad.log(1.0 + ad.exp(x)),
}


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden_dims: tuple
    output_dim: int
    activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        if any(d < 1 for d in dims):
            raise ValueError(f"all dimensions must be >= 1, got {dims}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    @property
    def dims(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)


class MLP:
    """Multilayer perceptron: weights, biases, and graph-building forward."""

    def __init__(self, spec, weights, biases):
        self.spec = spec
        self.weights = weights
        self.biases = biases

    @classmethod
    def init(cls, spec):
        """Xavier-uniform weights, zero biases, deterministic under seed."""
        rng = np.random.Generator(np.random.Philox(key=spec.seed))
        dims = spec.dims
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            weights.append(w.astype(config.dtype()))
            biases.append(np.zeros(fan_out, dtype=config.dtype()))
        return cls(spec, weights, biases)

    def n_parameters(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def param_nodes(self, requires_grad=True):
        """Wrap current parameter arrays as graph variables (W0, b0, W1, ...)."""
        nodes = []
        for w, b in zip(self.weights, self.biases):
            nodes.append(ad.variable(w, requires_grad=requires_grad))
            nodes.append(ad.variable(b.reshape(1, -1), requires_grad=requires_grad))
        return nodes

    def set_params(self, nodes_or_arrays):
        vals = [n.value if isinstance(n, ad.Node) else n for n in nodes_or_arrays]
        for k in range(len(self.weights)):
            self.weights[k] = np.asarray(vals[2 * k]).reshape(self.weights[k].shape)
            self.biases[k] = np.asarray(vals[2 * k + 1]).reshape(self.biases[k].shape)

    def forward(self, batch, params=None):
        """Run the network on an N x input_dim batch node (or array).

        ``params`` is the node list from ``param_nodes()``; when omitted the
        parameters are wrapped as non-trainable constants.
        """
        if not isinstance(batch, ad.Node):
            batch = ad.constant(np.asarray(batch, dtype=config.dtype()))
        if batch.value.ndim != 2 or batch.value.shape[1] != self.spec.input_dim:
            raise ad.ShapeError(
                f"batch shape {batch.value.shape} does not match "
                f"input_dim {self.spec.input_dim}"
            )
        if params is None:
            params = self.param_nodes(requires_grad=False)
        act = _ACTIVATIONS[self.spec.activation]
        n = batch.value.shape[0]
        h = batch
        n_layers = len(self.weights)
        for k in range(n_layers):
            w, b = params[2 * k], params[2 * k + 1]
            ones = ad.constant(np.ones((n, 1)))
            z = ad.matmul(h, ad.transpose(w)) + ad.matmul(ones, b)
            h = act(z) if k < n_layers - 1 else z
        return h

    def copy(self):
        return MLP(self.spec,
                   [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases])

    def flat_params(self):
        return np.concatenate(
            [np.ravel(a) for pair in zip(self.weights, self.biases) for a in pair]
        )

    def save(self, path):
        header = json.dumps({
            "input_dim": self.spec.input_dim,
            "hidden_dims": list(self.spec.hidden_dims),
            "output_dim": self.spec.output_dim,
            "activation": self.spec.activation,
            "seed": self.spec.seed,
        }).encode()
        flat = self.flat_params().astype("<f8")
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<B", _VERSION))
            f.write(struct.pack("<I", len(header)))
            f.write(header)
            f.write(struct.pack("<Q", flat.size))
            f.write(flat.tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:4] != _MAGIC:
            raise ValueError("checkpoint: bad magic header")
        if blob[4] != _VERSION:
            raise ValueError(f"checkpoint: unsupported version {blob[4]}")
        off = 5
        (hlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        try:
            header = json.loads(blob[off:off + hlen].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ValueError(f"checkpoint: malformed header ({e})") from e
        off += hlen
        for key in ("input_dim", "hidden_dims", "output_dim", "activation", "seed"):
            if key not in header:
                raise ValueError(f"checkpoint: missing field {key!r}")
        spec = MLPSpec(header["input_dim"], tuple(header["hidden_dims"]),
                       header["output_dim"], header["activation"], header["seed"])
        (count,) = struct.unpack_from("<Q", blob, off)
        off += 8
        if len(blob) - off < count * 8:
            raise ValueError("checkpoint: truncated parameter block")
        flat = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
        mlp = cls.init(spec)
        if flat.size != mlp.n_parameters():
            raise ValueError(
                f"checkpoint: parameter count {flat.size} does not match spec "
                f"({mlp.n_parameters()})"
            )
        pos = 0
        for k in range(len(mlp.weights)):
            w = mlp.weights[k]
            mlp.weights[k] = flat[pos:pos + w.size].reshape(w.shape).astype(np.float64)
            pos += w.size
            b = mlp.biases[k]
            mlp.biases[k] = flat[pos:pos + b.size].reshape(b.shape).astype(np.float64)
            pos += b.size
        return mlp
