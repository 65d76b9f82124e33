"""Dense 64-bit matrices and a minimal reverse-mode differentiation tape.

Everything the recurrent models need is expressed through a small, closed set
of primitives: matmul, add, hadamard, tanh, hard_sigmoid, softmax_rows,
concat_cols, slice_cols, scale and sum_reduce.  Each primitive evaluates
eagerly with numpy and, while a tape is open, records its inputs so the exact
(sub)gradient can be replayed later.  Tapes are define-by-run and rebuilt per
batch; there is no graph reuse and no graph optimizer.

Backward pass conventions:

* gradients are accumulated per node, visiting nodes in reverse recording
  order exactly once;
* interior gradients are freed as soon as they have been consumed, which
  keeps peak memory close to the forward activations alone;
* leaves that were not requested (e.g. the per-step input slices) never
  receive a gradient, so the corresponding matrix products are skipped.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Matrix",
    "Tape",
    "ShapeError",
    "ContractError",
    "active_tape",
    "matmul",
    "add",
    "hadamard",
    "tanh",
    "hard_sigmoid",
    "softmax_rows",
    "concat_cols",
    "slice_cols",
    "scale",
    "sum_reduce",
    "backward",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested operation."""


class ContractError(ValueError):
    """An operation was invoked outside its documented contract."""


class Matrix:
    """A dense 2-D float64 matrix, row-major, immutable by convention.

    Rows are the batch dimension throughout the package.  Ops never mutate
    operands; the only sanctioned in-place writes are the optimizer's
    parameter updates, which own their arrays.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, order="C")
        if arr.ndim == 1:
            raise ShapeError(
                f"Matrix must be 2-D, got 1-D data of length {arr.shape[0]}"
            )
        if arr.ndim != 2:
            raise ShapeError(f"Matrix must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("Matrix entries must be finite")
        self.values = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Matrix":
        # Internal fast path: wrap a freshly computed float64 array we own.
        m = object.__new__(cls)
        m.values = arr
        return m

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Matrix":
        return cls._wrap(np.zeros((rows, cols)))

    @classmethod
    def ones(cls, rows: int, cols: int) -> "Matrix":
        return cls._wrap(np.ones((rows, cols)))

    @classmethod
    def full(cls, rows: int, cols: int, value: float) -> "Matrix":
        return cls._wrap(np.full((rows, cols), float(value)))

    @classmethod
    def eye(cls, n: int) -> "Matrix":
        return cls._wrap(np.eye(n))

    @classmethod
    def from_flat(cls, rows: int, cols: int, flat) -> "Matrix":
        arr = np.asarray(flat, dtype=np.float64).reshape(-1)
        if arr.size != rows * cols:
            raise ShapeError(
                f"from_flat: need {rows * cols} values for {rows}x{cols}, got {arr.size}"
            )
        return cls._wrap(arr.reshape(rows, cols).copy())

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def data(self) -> np.ndarray:
        """The entries as a flat row-major view."""
        return self.values.reshape(-1)

    def copy(self) -> "Matrix":
        return Matrix._wrap(self.values.copy())

    def __repr__(self) -> str:
        return f"Matrix({self.rows}x{self.cols})"


_TAPES: list["Tape"] = []


def active_tape() -> "Tape | None":
    """The innermost open tape, or None outside any ``with Tape()`` block."""
    return _TAPES[-1] if _TAPES else None


class TapeNode:
    """One recorded primitive: op kind, input node ids, output matrix."""

    __slots__ = ("op", "inputs", "out", "ctx")

    def __init__(self, op: str, inputs: tuple[int, ...], out: Matrix, ctx=()):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.ctx = ctx


class Tape:
    """An append-only record of primitives, replayed in reverse by backward().

    Usage::

        with Tape() as tape:
            y = matmul(w, x)
            loss = sum_reduce(hadamard(y, y))
        grads = tape.backward(loss, wrt=[w])

    Node ids increase with recording order, so every node's inputs appear
    strictly before it.  Run backward before reusing the same Matrix objects
    on a different tape; ids are looked up by object identity.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self._ids: dict[int, int] = {}

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPES.pop()
        if popped is not self:
            raise ContractError("tapes must unwind in LIFO order")
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def node_id(self, m: Matrix) -> int | None:
        """The node id of ``m`` on this tape, or None if never recorded."""
        return self._ids.get(id(m))

    def watch(self, m: Matrix) -> int:
        """Register ``m`` as a leaf (if new) and return its node id."""
        nid = self._ids.get(id(m))
        if nid is None:
            nid = len(self.nodes)
            self.nodes.append(TapeNode("leaf", (), m))
            self._ids[id(m)] = nid
        return nid

    def _record(self, op: str, inputs: tuple[Matrix, ...], out: Matrix, ctx=()):
        ids = tuple(self.watch(x) for x in inputs)
        nid = len(self.nodes)
        self.nodes.append(TapeNode(op, ids, out, ctx))
        self._ids[id(out)] = nid

    def backward(self, loss: Matrix, wrt=None) -> dict[int, Matrix]:
        return backward(self, loss, wrt)


def _maybe_record(op: str, inputs: tuple[Matrix, ...], out: Matrix, ctx=()):
    tape = active_tape()
    if tape is not None:
        tape._record(op, inputs, out, ctx)
    return out


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product a @ b."""
    if a.cols != b.rows:
        raise ShapeError(
            f"matmul: cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}"
        )
    out = Matrix._wrap(a.values @ b.values)
    return _maybe_record("matmul", (a, b), out)


def add(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise sum; a 1xC operand broadcasts across the rows of an RxC one."""
    if a.shape != b.shape:
        row_a = a.rows == 1 and a.cols == b.cols
        row_b = b.rows == 1 and b.cols == a.cols
        if not (row_a or row_b):
            raise ShapeError(
                f"add: shapes {a.rows}x{a.cols} and {b.rows}x{b.cols} do not conform"
            )
    out = Matrix._wrap(a.values + b.values)
    return _maybe_record("add", (a, b), out)


def hadamard(a: Matrix, b: Matrix) -> Matrix:
    """Elementwise product; an Rx1 operand broadcasts across the columns of an RxC one."""
    if a.shape != b.shape:
        col_a = a.cols == 1 and a.rows == b.rows
        col_b = b.cols == 1 and b.rows == a.rows
        if not (col_a or col_b):
            raise ShapeError(
                f"hadamard: shapes {a.rows}x{a.cols} and {b.rows}x{b.cols} do not conform"
            )
    out = Matrix._wrap(a.values * b.values)
    return _maybe_record("hadamard", (a, b), out)


def tanh(x: Matrix) -> Matrix:
    out = Matrix._wrap(np.tanh(x.values))
    return _maybe_record("tanh", (x,), out)


def hard_sigmoid(x: Matrix) -> Matrix:
    """Piecewise-linear sigmoid: max(0, min(1, 0.2*x + 0.5)).

    Saturates exactly at 0 for x <= -2.5 and at 1 for x >= 2.5.  The
    backward rule uses the subgradient 0 at the two kinks.
    """
    out = Matrix._wrap(np.clip(0.2 * x.values + 0.5, 0.0, 1.0))
    return _maybe_record("hard_sigmoid", (x,), out)


def softmax_rows(x: Matrix) -> Matrix:
    """Row-wise softmax, computed with the max-shift trick for stability."""
    shifted = x.values - x.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = Matrix._wrap(e / e.sum(axis=1, keepdims=True))
    return _maybe_record("softmax_rows", (x,), out)


def concat_cols(parts) -> Matrix:
    """Concatenate matrices with equal row counts side by side."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_cols: need at least one matrix")
    rows = parts[0].rows
    for p in parts[1:]:
        if p.rows != rows:
            raise ShapeError(
                f"concat_cols: row counts differ ({rows} vs {p.rows})"
            )
    out = Matrix._wrap(np.concatenate([p.values for p in parts], axis=1))
    widths = tuple(p.cols for p in parts)
    return _maybe_record("concat_cols", tuple(parts), out, widths)


def slice_cols(x: Matrix, start: int, stop: int) -> Matrix:
    """The contiguous column block x[:, start:stop] as a new matrix."""
    if not (0 <= start < stop <= x.cols):
        raise ShapeError(
            f"slice_cols: bounds [{start}, {stop}) invalid for {x.rows}x{x.cols}"
        )
    out = Matrix._wrap(np.ascontiguousarray(x.values[:, start:stop]))
    return _maybe_record("slice_cols", (x,), out, (start, stop))


def scale(x: Matrix, factor: float) -> Matrix:
    """Multiply every entry by a python scalar."""
    k = float(factor)
    out = Matrix._wrap(k * x.values)
    return _maybe_record("scale", (x,), out, (k,))


def sum_reduce(x: Matrix) -> Matrix:
    """Sum of all entries, as a 1x1 matrix."""
    out = Matrix._wrap(np.array([[x.values.sum()]]))
    return _maybe_record("sum_reduce", (x,), out)


def _acc(grads: dict, need, nid: int, val: np.ndarray):
    # Backward rules hand over freshly allocated arrays, so accumulating
    # in place here never aliases another node's stored gradient.
    if not need[nid]:
        return
    cur = grads.get(nid)
    if cur is None:
        grads[nid] = val
    else:
        cur += val


def _bw_matmul(nd, nodes, g, grads, need):
    ia, ib = nd.inputs
    if need[ia]:
        _acc(grads, need, ia, g @ nodes[ib].out.values.T)
    if need[ib]:
        _acc(grads, need, ib, nodes[ia].out.values.T @ g)


def _bw_add(nd, nodes, g, grads, need):
    for j in nd.inputs:
        if not need[j]:
            continue
        if nodes[j].out.shape == g.shape:
            _acc(grads, need, j, g.copy())
        else:
            _acc(grads, need, j, g.sum(axis=0, keepdims=True))


def _bw_hadamard(nd, nodes, g, grads, need):
    ia, ib = nd.inputs
    a = nodes[ia].out.values
    b = nodes[ib].out.values
    if need[ia]:
        full = g * b
        if full.shape != a.shape:
            full = full.sum(axis=1, keepdims=True)
        _acc(grads, need, ia, full)
    if need[ib]:
        full = g * a
        if full.shape != b.shape:
            full = full.sum(axis=1, keepdims=True)
        _acc(grads, need, ib, full)


def _bw_tanh(nd, nodes, g, grads, need):
    j = nd.inputs[0]
    if need[j]:
        y = nd.out.values
        _acc(grads, need, j, g * (1.0 - y * y))


def _bw_hard_sigmoid(nd, nodes, g, grads, need):
    j = nd.inputs[0]
    if need[j]:
        x = nodes[j].out.values
        mask = (x > -2.5) & (x < 2.5)
        _acc(grads, need, j, g * (0.2 * mask))


def _bw_softmax_rows(nd, nodes, g, grads, need):
    j = nd.inputs[0]
    if need[j]:
        y = nd.out.values
        inner = (g * y).sum(axis=1, keepdims=True)
        _acc(grads, need, j, y * (g - inner))


def _bw_concat_cols(nd, nodes, g, grads, need):
    offset = 0
    for j, width in zip(nd.inputs, nd.ctx):
        if need[j]:
            _acc(grads, need, j, g[:, offset:offset + width].copy())
        offset += width


def _bw_slice_cols(nd, nodes, g, grads, need):
    j = nd.inputs[0]
    if need[j]:
        start, stop = nd.ctx
        full = np.zeros(nodes[j].out.shape)
        full[:, start:stop] = g
        _acc(grads, need, j, full)


def _bw_scale(nd, nodes, g, grads, need):
    j = nd.inputs[0]
    if need[j]:
        _acc(grads, need, j, nd.ctx[0] * g)


def _bw_sum_reduce(nd, nodes, g, grads, need):
    j = nd.inputs[0]
    if need[j]:
        _acc(grads, need, j, np.full(nodes[j].out.shape, g[0, 0]))


_BACKWARD = {
    "matmul": _bw_matmul,
    "add": _bw_add,
    "hadamard": _bw_hadamard,
    "tanh": _bw_tanh,
    "hard_sigmoid": _bw_hard_sigmoid,
    "softmax_rows": _bw_softmax_rows,
    "concat_cols": _bw_concat_cols,
    "slice_cols": _bw_slice_cols,
    "scale": _bw_scale,
    "sum_reduce": _bw_sum_reduce,
}


def backward(tape: Tape, loss: Matrix, wrt=None) -> dict[int, Matrix]:
    """Gradients of a scalar loss with respect to leaves of the tape.

    Parameters
    ----------
    tape : the tape on which ``loss`` was recorded.
    loss : a 1x1 matrix produced by ops on that tape.
    wrt : optional sequence of matrices to differentiate against.  Defaults
        to every leaf.  Requested matrices with no path to the loss get a
        zero gradient.

    Returns
    -------
    dict mapping node id -> gradient Matrix (same shape as the leaf).  Look
    ids up with ``tape.node_id``.
    """
    loss_id = tape.node_id(loss)
    if loss_id is None:
        raise ContractError("loss was not recorded on this tape")
    if loss.shape != (1, 1):
        raise ContractError(
            f"loss must be a 1x1 matrix, got {loss.rows}x{loss.cols}"
        )
    nodes = tape.nodes
    if wrt is None:
        wrt_ids = [i for i, nd in enumerate(nodes) if nd.op == "leaf"]
    else:
        wrt_ids = [tape.watch(m) for m in wrt]
    keep = set(wrt_ids)

    # Forward sweep: a node needs a gradient iff it can reach a requested
    # leaf.  Inputs are always recorded before their consumers, so one pass
    # in id order suffices.
    need = np.zeros(len(nodes), dtype=bool)
    for i in wrt_ids:
        need[i] = True
    for i, nd in enumerate(nodes):
        if nd.op != "leaf" and not need[i]:
            for j in nd.inputs:
                if need[j]:
                    need[i] = True
                    break

    grads: dict[int, np.ndarray] = {loss_id: np.ones((1, 1))}
    for i in range(loss_id, -1, -1):
        nd = nodes[i]
        if nd.op == "leaf":
            continue
        g = grads.get(i)
        if g is None:
            continue
        _BACKWARD[nd.op](nd, nodes, g, grads, need)
        if i not in keep:
            del grads[i]

    result: dict[int, Matrix] = {}
    for i in wrt_ids:
        g = grads.get(i)
        if g is None:
            g = np.zeros(nodes[i].out.shape)
        result[i] = Matrix._wrap(g)
    return result
