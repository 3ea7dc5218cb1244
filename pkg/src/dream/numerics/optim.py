"""Parameter slots, Xavier initialization and the Adam update."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError


def xavier_init(rows, cols, seed=None, dtype=np.float32):
    """Uniform Glorot init on ``[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]``.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)


@dataclass(eq=False)
class ParamSlot:
    name: str
    value: np.ndarray
    trainable: bool = True
    grad: np.ndarray = field(default=None, repr=False)
    adam_m: np.ndarray = field(default=None, repr=False)
    adam_v: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        for attr in ("grad", "adam_m", "adam_v"):
            if getattr(self, attr) is None:
                setattr(self, attr, np.zeros_like(self.value))

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    def step(self, params):
        self.t += 1
        adam_step(params, self.lr, self.beta1, self.beta2, self.eps, self.t)


def adam_step(params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, t=1):
    """One bias-corrected Adam update on every trainable slot, then zero grads.

    The whole step is refused if any gradient is non-finite.
    """
    if t < 1:
        raise ValueError(f"Adam step counter starts at 1, got {t}")
    params = list(params)
    for p in params:
        if p.trainable and not np.all(np.isfinite(p.grad)):
            pos = tuple(int(x) for x in np.argwhere(~np.isfinite(p.grad))[0])
            raise NumericError(f"non-finite gradient in {p.name} at {pos}", term=p.name)
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p in params:
        if p.trainable:
            g = p.grad.astype(np.float64)
            m = beta1 * p.adam_m.astype(np.float64) + (1.0 - beta1) * g
            v = beta2 * p.adam_v.astype(np.float64) + (1.0 - beta2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
            p.adam_m[...] = m
            p.adam_v[...] = v
            p.value[...] = p.value.astype(np.float64) - update
        p.zero_grad()
