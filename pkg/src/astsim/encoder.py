"""Binary Tree-LSTM encoder with hand-derived backpropagation.

Each binarized AST node is encoded bottom-up from its label embedding and
the states of its two children.  The cell uses one forget gate per child,
with distinct recurrent weights for every (gate, child-side) pairing but a
single shared input weight and bias for both forget gates.  A missing
child contributes a fixed initial state (zero vectors by default).  The
root hidden state is the function encoding.

For speed, the five gate pre-activations are computed as a single matrix
product: the per-gate weights are stacked once per tree into a block
matrix ``G`` of shape (5n, d_e + 2n) acting on ``[e; h_left; h_right]``.
Row blocks, in order: left forget, right forget, input, output, update.
The backward pass accumulates a gradient for ``G`` and splits it back
into the named tensors at the end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from astsim.ast_core import LABEL_COUNT, BinTree
from astsim.nn import ModelParams, sigmoid

LEAF_INITS = ("zeros", "ones")


@dataclass
class NodeState:
    """States and cached gate activations of one encoded node."""

    h: np.ndarray
    c: np.ndarray
    fl: np.ndarray
    fr: np.ndarray
    i: np.ndarray
    o: np.ndarray
    u: np.ndarray
    e: np.ndarray
    label: int


@dataclass(frozen=True)
class Encoding:
    """Function encoding: the root hidden state."""

    v: np.ndarray
    node_count: int


@dataclass
class TreeCaches:
    """Everything the backward pass needs, in postorder."""

    states: list[NodeState]
    left: list[int]
    right: list[int]
    G: np.ndarray
    b_stack: np.ndarray
    leaf_h: np.ndarray
    leaf_c: np.ndarray


def build_stacked_weights(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    G = np.vstack(
        [
            np.hstack([params.Wf, params.Ufll, params.Uflr]),
            np.hstack([params.Wf, params.Ufrl, params.Ufrr]),
            np.hstack([params.Wi, params.Uil, params.Uir]),
            np.hstack([params.Wo, params.Uol, params.Uor]),
            np.hstack([params.Wu, params.Uul, params.Uur]),
        ]
    )
    b_stack = np.concatenate([params.bf, params.bf, params.bi, params.bo, params.bu])
    return G, b_stack


def _step(
    G: np.ndarray,
    b_stack: np.ndarray,
    n: int,
    e: np.ndarray,
    hl: np.ndarray,
    cl: np.ndarray,
    hr: np.ndarray,
    cr: np.ndarray,
    label: int,
) -> NodeState:
    x = np.concatenate([e, hl, hr])
    z = G @ x + b_stack
    fl = sigmoid(z[0 * n : 1 * n])
    fr = sigmoid(z[1 * n : 2 * n])
    i = sigmoid(z[2 * n : 3 * n])
    o = sigmoid(z[3 * n : 4 * n])
    u = np.tanh(z[4 * n : 5 * n])
    c = i * u + fl * cl + fr * cr
    h = o * np.tanh(c)
    return NodeState(h=h, c=c, fl=fl, fr=fr, i=i, o=o, u=u, e=e, label=label)


def encode_node(
    e: np.ndarray,
    left: tuple[np.ndarray, np.ndarray],
    right: tuple[np.ndarray, np.ndarray],
    params: ModelParams,
    label: int = 0,
) -> NodeState:
    """Encode a single node from its embedding and child (h, c) states."""
    G, b_stack = build_stacked_weights(params)
    return _step(G, b_stack, params.n, e, left[0], left[1], right[0], right[1], label)


def _leaf_state(n: int, leaf_init: str) -> tuple[np.ndarray, np.ndarray]:
    if leaf_init not in LEAF_INITS:
        raise ValueError(f"leaf_init must be one of {LEAF_INITS}, got {leaf_init!r}")
    if leaf_init == "ones":
        return np.ones(n), np.ones(n)
    return np.zeros(n), np.zeros(n)


def _postorder(tree: BinTree) -> tuple[list[BinTree], list[int], list[int]]:
    """Postorder node list plus child indices into it (-1 when absent).

    Indices are positional, so a node object reachable through two paths
    is treated as two tree positions rather than collapsing by identity.
    """
    order: list[BinTree] = []
    left: list[int] = []
    right: list[int] = []
    done: list[int] = []
    stack: list[tuple[BinTree, bool]] = [(tree, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            ri = done.pop() if node.right is not None else -1
            li = done.pop() if node.left is not None else -1
            done.append(len(order))
            order.append(node)
            left.append(li)
            right.append(ri)
            continue
        stack.append((node, True))
        if node.right is not None:
            stack.append((node.right, False))
        if node.left is not None:
            stack.append((node.left, False))
    return order, left, right


def encode_tree(
    tree: BinTree,
    params: ModelParams,
    leaf_init: str = "zeros",
    want_caches: bool = False,
):
    """Bottom-up encoding of a whole binarized tree.

    Returns an :class:`Encoding`, or ``(Encoding, TreeCaches)`` when the
    caches for backpropagation are requested.
    """
    n = params.n
    G, b_stack = build_stacked_weights(params)
    leaf_h, leaf_c = _leaf_state(n, leaf_init)
    order, left, right = _postorder(tree)
    states: list[NodeState] = []
    for idx, node in enumerate(order):
        if not 1 <= node.label <= LABEL_COUNT:
            raise ValueError(f"node label {node.label} outside [1, {LABEL_COUNT}]")
        li, ri = left[idx], right[idx]
        hl, cl = (states[li].h, states[li].c) if li >= 0 else (leaf_h, leaf_c)
        hr, cr = (states[ri].h, states[ri].c) if ri >= 0 else (leaf_h, leaf_c)
        e = params.E[node.label - 1]
        states.append(_step(G, b_stack, n, e, hl, cl, hr, cr, node.label))
    encoding = Encoding(v=states[-1].h, node_count=len(order))
    if not want_caches:
        return encoding
    caches = TreeCaches(
        states=states,
        left=left,
        right=right,
        G=G,
        b_stack=b_stack,
        leaf_h=leaf_h,
        leaf_c=leaf_c,
    )
    return encoding, caches


def backward_tree(
    caches: TreeCaches,
    params: ModelParams,
    d_root_h: np.ndarray,
    grads: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Backpropagate a gradient on the root hidden state through the tree.

    Accumulates into ``grads`` (name -> array, matching ``params``) and
    returns it, so the caller can sum gradients over several trees.
    """
    n = params.n
    d_e = params.d_e
    states, left, right = caches.states, caches.left, caches.right
    G = caches.G
    N = len(states)
    dh = np.zeros((N, n))
    dc = np.zeros((N, n))
    dh[N - 1] = d_root_h
    dG = np.zeros_like(G)
    db = np.zeros(5 * n)
    dE = np.zeros((LABEL_COUNT, d_e))

    for idx in range(N - 1, -1, -1):
        st = states[idx]
        li, ri = left[idx], right[idx]
        hl = states[li].h if li >= 0 else caches.leaf_h
        hr = states[ri].h if ri >= 0 else caches.leaf_h
        cl = states[li].c if li >= 0 else caches.leaf_c
        cr = states[ri].c if ri >= 0 else caches.leaf_c

        tanh_c = np.tanh(st.c)
        do = dh[idx] * tanh_c
        dck = dc[idx] + dh[idx] * st.o * (1.0 - tanh_c * tanh_c)
        di = dck * st.u
        du = dck * st.i
        dfl = dck * cl
        dfr = dck * cr

        afl = dfl * st.fl * (1.0 - st.fl)
        afr = dfr * st.fr * (1.0 - st.fr)
        ai = di * st.i * (1.0 - st.i)
        ao = do * st.o * (1.0 - st.o)
        au = du * (1.0 - st.u * st.u)
        a_stack = np.concatenate([afl, afr, ai, ao, au])

        x = np.concatenate([st.e, hl, hr])
        dG += np.outer(a_stack, x)
        db += a_stack
        dx = G.T @ a_stack
        dE[st.label - 1] += dx[:d_e]
        if li >= 0:
            dh[li] += dx[d_e : d_e + n]
            dc[li] += dck * st.fl
        if ri >= 0:
            dh[ri] += dx[d_e + n :]
            dc[ri] += dck * st.fr

    if grads is None:
        grads = {}

    def add(name: str, value: np.ndarray) -> None:
        if name in grads:
            grads[name] += value
        else:
            grads[name] = value.copy()

    add("E", dE)
    add("Wf", dG[0:n, :d_e] + dG[n : 2 * n, :d_e])
    add("Wi", dG[2 * n : 3 * n, :d_e])
    add("Wo", dG[3 * n : 4 * n, :d_e])
    add("Wu", dG[4 * n : 5 * n, :d_e])
    lo, hi = d_e, d_e + n
    add("Ufll", dG[0:n, lo:hi])
    add("Uflr", dG[0:n, hi:])
    add("Ufrl", dG[n : 2 * n, lo:hi])
    add("Ufrr", dG[n : 2 * n, hi:])
    add("Uil", dG[2 * n : 3 * n, lo:hi])
    add("Uir", dG[2 * n : 3 * n, hi:])
    add("Uol", dG[3 * n : 4 * n, lo:hi])
    add("Uor", dG[3 * n : 4 * n, hi:])
    add("Uul", dG[4 * n : 5 * n, lo:hi])
    add("Uur", dG[4 * n : 5 * n, hi:])
    add("bf", db[0:n] + db[n : 2 * n])
    add("bi", db[2 * n : 3 * n])
    add("bo", db[3 * n : 4 * n])
    add("bu", db[4 * n : 5 * n])
    return grads
