"""A small reverse-mode differentiation tape over numpy arrays.

Every primitive appends one node to the active :class:`Tape`: the output
:class:`Var` plus a closure that maps the output adjoint to input adjoints.
Nodes are stored in creation order, which is a topological order, so
:func:`backward` is a single reverse sweep.  Adjoints of a value used more
than once are summed.

Two fused primitives keep long recurrences affordable: :func:`lstm_layer`
(a whole LSTM layer over all time steps, with a hand-written BPTT adjoint) and
:func:`kde` (Gaussian kernel density on a fixed grid).  Both are checked
against compositions of the elementary primitives in the test suite.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

__all__ = [
    "Tape",
    "Var",
    "backward",
    "value_of",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "transpose",
    "sigmoid",
    "tanh",
    "square",
    "absolute",
    "exp",
    "mean",
    "sum_",
    "concat",
    "stack",
    "getitem",
    "reshape",
    "lstm_layer",
    "lstm_layer_forward",
    "kde",
]


class Tape:
    """Ordered record of primitive operations."""

    def __init__(self):
        self.nodes: list[tuple[Var, str, tuple, object]] = []
        self.n_vars = 0

    def _new_index(self) -> int:
        self.n_vars += 1
        return self.n_vars - 1

    def var(self, value, name: str | None = None) -> "Var":
        """Register a leaf (e.g. a trainable parameter)."""
        return Var(np.asarray(value, dtype=np.float64), self, name)

    def __len__(self):
        return len(self.nodes)

    def clear(self):
        """Drop recorded operations; breaks the Var <-> tape cycles so memory frees at once."""
        self.nodes.clear()


class Var:
    __slots__ = ("value", "tape", "index", "name")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, value: np.ndarray, tape: Tape, name: str | None = None):
        self.value = value
        self.tape = tape
        self.index = tape._new_index()
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name!r})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)


def value_of(x):
    if isinstance(x, Var):
        return x.value
    a = np.asarray(x)
    # keep wider floats (the gradient oracle runs in extended precision)
    return a if a.dtype.kind == "f" and a.dtype.itemsize >= 8 else a.astype(np.float64)


def _tape_of(*xs) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _record(name: str, value: np.ndarray, parents: tuple, bwd):
    tape = _tape_of(*parents)
    if tape is None:
        return value
    out = Var(value, tape)
    tape.nodes.append((out, name, parents, bwd))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b):
    av, bv = value_of(a), value_of(b)

    def bwd(g, acc):
        acc(a, _unbroadcast(g, av.shape))
        acc(b, _unbroadcast(g, bv.shape))

    return _record("add", av + bv, (a, b), bwd)


def sub(a, b):
    av, bv = value_of(a), value_of(b)

    def bwd(g, acc):
        acc(a, _unbroadcast(g, av.shape))
        acc(b, _unbroadcast(-g, bv.shape))

    return _record("sub", av - bv, (a, b), bwd)


def mul(a, b):
    av, bv = value_of(a), value_of(b)

    def bwd(g, acc):
        if isinstance(a, Var):
            acc(a, _unbroadcast(g * bv, av.shape))
        if isinstance(b, Var):
            acc(b, _unbroadcast(g * av, bv.shape))

    return _record("mul", av * bv, (a, b), bwd)


def div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv

    def bwd(g, acc):
        if isinstance(a, Var):
            acc(a, _unbroadcast(g / bv, av.shape))
        if isinstance(b, Var):
            acc(b, _unbroadcast(-g * out / bv, bv.shape))

    return _record("div", out, (a, b), bwd)


def neg(a):
    return _record("neg", -value_of(a), (a,), lambda g, acc: acc(a, -g))


def sigmoid(a):
    out = 1.0 / (1.0 + np.exp(-value_of(a)))
    return _record("sigmoid", out, (a,), lambda g, acc: acc(a, g * out * (1.0 - out)))


def tanh(a):
    out = np.tanh(value_of(a))
    return _record("tanh", out, (a,), lambda g, acc: acc(a, g * (1.0 - out * out)))


def square(a):
    av = value_of(a)
    return _record("square", av * av, (a,), lambda g, acc: acc(a, 2.0 * g * av))


def absolute(a):
    av = value_of(a)
    return _record("abs", np.abs(av), (a,), lambda g, acc: acc(a, g * np.sign(av)))


def exp(a):
    out = np.exp(value_of(a))
    return _record("exp", out, (a,), lambda g, acc: acc(a, g * out))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    av, bv = value_of(a), value_of(b)

    def bwd(g, acc):
        if isinstance(a, Var):
            ga = g @ np.swapaxes(bv, -1, -2) if bv.ndim > 1 else np.multiply.outer(g, bv)
            acc(a, _unbroadcast(ga, av.shape))
        if isinstance(b, Var):
            if av.ndim == 1:
                gb = np.multiply.outer(av, g)
            else:
                gb = np.swapaxes(av, -1, -2) @ g
                gb = gb.reshape(-1, *bv.shape).sum(axis=0) if gb.ndim > bv.ndim else gb
            acc(b, gb)

    return _record("matmul", av @ bv, (a, b), bwd)


def transpose(a):
    return _record("transpose", value_of(a).T, (a,), lambda g, acc: acc(a, g.T))


def reshape(a, shape):
    av = value_of(a)
    return _record("reshape", av.reshape(shape), (a,), lambda g, acc: acc(a, g.reshape(av.shape)))


# ---------------------------------------------------------------- reductions / structure


def mean(a, axis=None):
    av = value_of(a)
    n = av.size if axis is None else np.prod([av.shape[k] for k in np.atleast_1d(axis)])

    def bwd(g, acc):
        gg = g if axis is None else np.expand_dims(g, axis)
        acc(a, np.broadcast_to(gg / n, av.shape))

    return _record("mean", np.asarray(av.mean(axis=axis)), (a,), bwd)


def sum_(a, axis=None):
    av = value_of(a)

    def bwd(g, acc):
        gg = g if axis is None else np.expand_dims(g, axis)
        acc(a, np.broadcast_to(gg, av.shape))

    return _record("sum", np.asarray(av.sum(axis=axis)), (a,), bwd)


def getitem(a, idx):
    av = value_of(a)
    return _record("slice", av[idx], (a,), lambda g, acc: acc(a, g, idx))


def concat(xs, axis=0):
    vals = [value_of(x) for x in xs]
    ax = axis % vals[0].ndim
    bounds = np.cumsum([0] + [v.shape[ax] for v in vals])

    def bwd(g, acc):
        for x, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[ax] = slice(lo, hi)
            acc(x, g[tuple(sl)])

    return _record("concat", np.concatenate(vals, axis=ax), tuple(xs), bwd)


def stack(xs, axis=0):
    vals = [value_of(x) for x in xs]

    def bwd(g, acc):
        for k, x in enumerate(xs):
            acc(x, np.take(g, k, axis=axis))

    return _record("stack", np.stack(vals, axis=axis), tuple(xs), bwd)


# ---------------------------------------------------------------- fused primitives


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm_layer_forward(u: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray, keep: bool = False):
    """Plain forward pass of one LSTM layer over ``u`` (batch x time x in).

    Gate blocks in ``W`` (4H x in), ``U`` (4H x H) and ``b`` (4H) are ordered
    forget, input, output, candidate.  Returns the hidden sequence and, with
    ``keep``, the time-major per-step activations needed for the adjoint.
    """
    B, T, _ = u.shape
    H = U.shape[1]
    # time-major so every per-step slice is contiguous
    ut = np.ascontiguousarray(u.transpose(1, 0, 2))
    Wt = np.ascontiguousarray(W.T)
    Ut = np.ascontiguousarray(U.T)
    dtype = np.result_type(ut, Wt)
    c = np.zeros((B, H), dtype)
    if keep:
        # pre-activations for all steps, overwritten in place by the activations
        acts = ut @ Wt
        acts += b
        cs = np.empty((T, B, H), dtype)
        tcs = np.empty((T, B, H), dtype)
        hs = np.empty((T, B, H), dtype)
    else:
        out = np.empty((B, T, H), dtype)
    h = None
    for t in range(T):
        if keep:
            z = acts[t]
        else:
            z = ut[t] @ Wt
            z += b
        if h is not None:
            z += h @ Ut
        np.multiply(z[:, : 3 * H], 0.5, out=z[:, : 3 * H])
        np.tanh(z[:, : 3 * H], out=z[:, : 3 * H])
        z[:, : 3 * H] *= 0.5
        z[:, : 3 * H] += 0.5
        np.tanh(z[:, 3 * H :], out=z[:, 3 * H :])
        c *= z[:, :H]
        c += z[:, H : 2 * H] * z[:, 3 * H :]
        if keep:
            cs[t] = c
            tc = np.tanh(c, out=tcs[t])
            h = np.multiply(z[:, 2 * H : 3 * H], tc, out=hs[t])
        else:
            h = z[:, 2 * H : 3 * H] * np.tanh(c)
            out[:, t] = h
    if keep:
        return hs.transpose(1, 0, 2), (acts, cs, tcs, hs)
    return out


def lstm_layer(u, W, U, b):
    uv, Wv, Uv, bv = value_of(u), value_of(W), value_of(U), value_of(b)
    if uv.ndim != 3 or Wv.shape[1] != uv.shape[2] or Uv.shape[0] != Wv.shape[0] or Uv.shape[0] != 4 * Uv.shape[1]:
        raise ShapeError(
            f"lstm_layer shapes inconsistent: input {uv.shape}, W {Wv.shape}, U {Uv.shape}, b {bv.shape}"
        )
    if _tape_of(u, W, U, b) is None:
        return lstm_layer_forward(uv, Wv, Uv, bv)
    out, (acts, cs, tcs, hs) = lstm_layer_forward(uv, Wv, Uv, bv, keep=True)
    T, B, H = hs.shape

    def bwd(dH, acc):
        dHt = np.ascontiguousarray(np.transpose(dH, (1, 0, 2)))
        dP = np.empty((T, B, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        zeros = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            a, tc = acts[t], tcs[t]
            f, i, o, g = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
            dh = dHt[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            c_prev = cs[t - 1] if t else zeros
            dz = dP[t]
            dz[:, :H] = dc * c_prev
            dz[:, H : 2 * H] = dc * g
            dz[:, 2 * H : 3 * H] = dh * tc
            sig = a[:, : 3 * H]
            dz[:, : 3 * H] *= sig * (1.0 - sig)
            dz[:, 3 * H :] = dc * i * (1.0 - g * g)
            dc_next = dc * f
            dh_next = dz @ Uv
        flat = dP.reshape(T * B, 4 * H)
        if isinstance(U, Var):
            hprev = np.concatenate([np.zeros((1, B, H)), hs[:-1]], axis=0).reshape(T * B, H)
            acc(U, flat.T @ hprev)
        if isinstance(W, Var):
            acc(W, flat.T @ np.transpose(uv, (1, 0, 2)).reshape(T * B, -1))
        if isinstance(b, Var):
            acc(b, flat.sum(axis=0))
        if isinstance(u, Var):
            acc(u, np.transpose(dP @ Wv, (1, 0, 2)))

    return _record("lstm_layer", out, (u, W, U, b), bwd)


_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def kde(x, grid: np.ndarray, h: float, chunk_elems: int = 16_000_000):
    """Gaussian KDE of all entries of ``x`` evaluated on a constant ``grid``."""
    xv = value_of(x).ravel()
    grid = np.asarray(grid, dtype=np.float64)
    n = xv.size
    step = max(1, chunk_elems // max(1, grid.size))
    dens = np.zeros(grid.size, np.result_type(xv, grid))
    cached = None
    if n <= step:
        # single chunk: keep phi * d for the adjoint instead of recomputing
        d = np.subtract.outer(grid / h, xv / h)
        phi = np.square(d)
        phi *= -0.5
        np.exp(phi, out=phi)
        dens += phi.sum(axis=1)
        if _tape_of(x) is not None:
            cached = np.multiply(phi, d, out=d)
    else:
        for lo in range(0, n, step):
            d = (grid[:, None] - xv[None, lo : lo + step]) / h
            dens += np.exp(-0.5 * d * d).sum(axis=1)
    scale = _INV_SQRT_2PI / (h * n)
    dens *= scale

    def bwd(g, acc):
        # d/dX_i of phi((x - X_i)/h) = phi * (x - X_i) / h^2
        if cached is not None:
            gx = g @ cached
        else:
            gx = np.empty(n)
            for lo in range(0, n, step):
                d = (grid[:, None] - xv[None, lo : lo + step]) / h
                gx[lo : lo + step] = g @ (np.exp(-0.5 * d * d) * d)
        acc(x, (gx * (scale / h)).reshape(value_of(x).shape))

    return _record("kde", dens, (x,), bwd)


# ---------------------------------------------------------------- reverse sweep


def backward(loss: Var, wrt=None) -> dict[int, np.ndarray]:
    """Reverse sweep from scalar ``loss``.

    Returns adjoints keyed by :attr:`Var.index`; with ``wrt`` (a sequence of
    leaves) returns a list aligned with it, zeros for unreachable leaves.
    """
    if not isinstance(loss, Var) or loss.value.size != 1:
        raise ShapeError("backward needs a scalar Var")
    tape = loss.tape
    grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.value)}
    owned: set[int] = set()

    def acc(v, g, idx=None):
        if not isinstance(v, Var):
            return
        k = v.index
        cur = grads.get(k)
        if idx is None:
            if cur is None:
                grads[k] = g
            elif k in owned:
                cur += g
            else:
                grads[k] = cur + g
                owned.add(k)
            return
        if cur is None:
            cur = np.zeros_like(v.value)
        elif k not in owned:
            cur = np.array(cur, copy=True)
        cur[idx] += g
        grads[k] = cur
        owned.add(k)

    for out, name, parents, bwd in reversed(tape.nodes):
        g = grads.get(out.index)
        if g is None:
            continue
        g = np.asarray(g)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite adjoint flowing into primitive {name!r}")
        if out.index != loss.index:
            # intermediate adjoints are not needed after use
            del grads[out.index]
        bwd(g, acc)

    for k, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for variable {k}")
    if wrt is None:
        return grads
    return [np.array(grads[v.index], copy=True) if v.index in grads else np.zeros_like(v.value) for v in wrt]
