"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Every operation records a backward closure on the enclosing graph; calling
``backward()`` on a scalar output accumulates gradients into every reachable
tensor with ``requires_grad=True``. The op set is deliberately small: just
what the fusion network, the losses, and the graph-matching term need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(ValueError):
    """An operation received or produced non-finite values."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction helpers ------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accum(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self):
        if self.data.ndim != 0 and self.data.size != 1:
            raise ShapeError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- elementwise arithmetic (numpy broadcasting) --------------------

    def _coerce(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            if a.requires_grad:
                a._accum(-g)

        return Tensor._make(-a.data, (a,), backward)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._make(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    # -- reductions ------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def backward(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accum(np.broadcast_to(g, a.shape).copy())
            else:
                ge = g if keepdims else np.expand_dims(g, axis)
                a._accum(np.broadcast_to(ge, a.shape).copy())

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self) -> "Tensor":
        return self.sum() / float(self.data.size)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul mismatch: {a.data.shape} x {b.data.shape}"
        )

    def backward(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return Tensor._make(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            a._accum(g.T)

    return Tensor._make(a.data.T, (a,), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        if a.requires_grad:
            a._accum(g * mask)

    return Tensor._make(a.data * mask, (a,), backward)


def softmax_rows(a: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise softmax of ``a / temperature`` with max-shift stabilization."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    if not np.all(np.isfinite(a.data)):
        raise NumericError("softmax_rows: non-finite input")
    z = a.data / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        if a.requires_grad:
            inner = (g * s).sum(axis=-1, keepdims=True)
            a._accum((g - inner) * s / temperature)

    return Tensor._make(s, (a,), backward)


def log_softmax_rows(a: Tensor) -> Tensor:
    if not np.all(np.isfinite(a.data)):
        raise NumericError("log_softmax_rows: non-finite input")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    s = np.exp(out)

    def backward(g):
        if a.requires_grad:
            a._accum(g - s * g.sum(axis=-1, keepdims=True))

    return Tensor._make(out, (a,), backward)


def softplus(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    sig = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        if a.requires_grad:
            a._accum(g * sig)

    return Tensor._make(out, (a,), backward)


def pick(a: Tensor, ids) -> Tensor:
    """Select one entry per row: out[i] = a[i, ids[i]]."""
    ids = np.asarray(ids, dtype=np.intp)
    if a.data.ndim != 2 or ids.ndim != 1 or ids.shape[0] != a.data.shape[0]:
        raise ShapeError("pick expects a 2-D tensor and one index per row")
    rows = np.arange(a.data.shape[0])

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[rows, ids] = g
            a._accum(full)

    return Tensor._make(a.data[rows, ids], (a,), backward)


def rows_select(a: Tensor, ids) -> Tensor:
    """Gather rows (embedding lookup); duplicate ids accumulate gradient."""
    ids = np.asarray(ids, dtype=np.intp)
    if np.any(ids < 0) or np.any(ids >= a.data.shape[0]):
        raise ShapeError("rows_select: index out of range")

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, ids, g)
            a._accum(full)

    return Tensor._make(a.data[ids], (a,), backward)


def shift_rows(a: Tensor, k: int) -> Tensor:
    """Shift rows down by k (k>0) or up (k<0), filling vacated rows with 0."""
    n = a.data.shape[0]
    out = np.zeros_like(a.data)
    if k >= 0:
        out[k:] = a.data[: n - k]
    else:
        out[:k] = a.data[-k:]

    def backward(g):
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        if k >= 0:
            full[: n - k] = g[k:]
        else:
            full[-k:] = g[:k]
        a._accum(full)

    return Tensor._make(out, (a,), backward)


def concat_rows(parts: list[Tensor]) -> Tensor:
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                p._accum(g[lo:hi])

    return Tensor._make(np.concatenate([p.data for p in parts], axis=0), tuple(parts), backward)


def logsumexp_cols(a: Tensor, groups: list[list[int]]) -> Tensor:
    """Per-row log-sum-exp over each column group: out[:, g] = lse(a[:, groups[g]])."""
    if a.data.ndim != 2:
        raise ShapeError("logsumexp_cols expects a 2-D tensor")
    n = a.data.shape[0]
    out = np.empty((n, len(groups)))
    weights = []  # within-group softmax, saved for backward
    for gi, cols in enumerate(groups):
        block = a.data[:, cols]
        m = block.max(axis=1, keepdims=True)
        e = np.exp(block - m)
        tot = e.sum(axis=1, keepdims=True)
        out[:, gi] = (m + np.log(tot))[:, 0]
        weights.append(e / tot)

    def backward(g):
        if not a.requires_grad:
            return
        full = np.zeros_like(a.data)
        for gi, cols in enumerate(groups):
            full[:, cols] += g[:, gi : gi + 1] * weights[gi]
        a._accum(full)

    return Tensor._make(out, (a,), backward)


def pairwise_l2(a: Tensor) -> Tensor:
    """All-pairs euclidean distance matrix D[i,j] = ||a_i - a_j||.

    Subgradient at coincident rows (D=0) is taken as 0.
    """
    if a.data.ndim != 2:
        raise ShapeError("pairwise_l2 expects a 2-D tensor")
    diff = a.data[:, None, :] - a.data[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))

    def backward(g):
        if not a.requires_grad:
            return
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = diff / dist[:, :, None]
        unit[~np.isfinite(unit)] = 0.0
        # d D_ij / d a_i = unit_ij, d D_ij / d a_j = -unit_ij
        grad = (g[:, :, None] * unit).sum(axis=1) - (g[:, :, None] * unit).sum(axis=0)
        a._accum(grad)

    return Tensor._make(dist, (a,), backward)


def l2_distance(a, b) -> float:
    """Euclidean distance between two equal-length vectors."""
    a = _as_array(a).ravel()
    b = _as_array(b).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"l2_distance length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


# -- gradient verification ---------------------------------------------


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    ok: bool


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry] = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return all(e.ok for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)


def grad_check(
    f,
    params: list[Tensor],
    names: list[str] | None = None,
    step: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f()`` against central differences.

    Relative error uses an absolute floor so near-zero gradients do not
    blow up the ratio.
    """
    if names is None:
        names = [f"param{i}" for i in range(len(params))]
    for p in params:
        p.grad = None
    out = f()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    report = GradCheckReport(tolerance=tol)
    for p, g, name in zip(params, analytic, names):
        numeric = np.zeros_like(p.data)
        flat = p.data.ravel()
        nflat = numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f().item()
            flat[i] = orig - step
            lo = f().item()
            flat[i] = orig
            nflat[i] = (hi - lo) / (2.0 * step)
        denom = np.maximum(np.maximum(np.abs(numeric), np.abs(g)), floor)
        err = float(np.max(np.abs(g - numeric) / denom)) if flat.size else 0.0
        report.entries.append(GradCheckEntry(name=name, max_rel_err=err, ok=err < tol))
    return report
