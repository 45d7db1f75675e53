"""Small model builders: reproducible toys for demos and tests.

Everything returns a plain model-description dict (the JSON schema of
`load_model`), so builders exercise the same validation path as files on
disk. Weights use the seeded form and are expanded at load time.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .graph import ModelGraph, graph_from_dict


def _conv(node_id, src, in_ch, out_ch, k, seed, d=1, s=1, scale=None):
    if scale is None:
        scale = 1.0 / np.sqrt(in_ch * k)
    return {
        "id": node_id, "input": src, "kind": "Conv1D", "kernel": k,
        "dilation": d, "stride": s, "in_channels": in_ch, "out_channels": out_ch,
        "weights": {"seed": int(seed), "scale": float(scale)},
    }


def _relu(node_id, src, ch):
    return {"id": node_id, "input": src, "kind": "ReLU",
            "in_channels": ch, "out_channels": ch}


def wavenet(layers: int = 8, channels: int = 4, kernel: int = 2,
            l: int = 256, s: int = 1, seed: int = 7,
            residual: bool = False) -> ModelGraph:
    """Dilated conv stack with doubling dilations (d = 2^i per layer).

    End-to-end receptive field 1 + (k-1) * (2^layers - 1); with the default
    kernel of 2 and l = 2^layers the model emits exactly one column per
    window. `residual=True` wraps each conv+relu in a skip connection.
    """
    nodes = []
    prev = "input"
    for i in range(layers):
        block_in = prev
        nodes.append(_conv(f"conv{i}", prev, channels, channels, kernel,
                           seed + 2 * i, d=2 ** i))
        nodes.append(_relu(f"relu{i}", f"conv{i}", channels))
        prev = f"relu{i}"
        if residual and block_in != "input":
            nodes.append({"id": f"add{i}", "input": [prev, block_in], "kind": "Add",
                          "in_channels": channels, "out_channels": channels})
            prev = f"add{i}"
    return graph_from_dict({
        "input_channels": channels,
        "window": {"l": l, "s": s},
        "nodes": nodes,
    })


def conv_pool_classifier(l: int = 1024, s: int = 32, in_channels: int = 4,
                         hidden: int = 8, classes: int = 3, seed: int = 11,
                         pool_kind: str = "GlobalAvgPool") -> ModelGraph:
    """Small-receptive-field feature extractor with a global head.

    Two k=5 convs and a strided max pool (receptive field 10 samples) in
    front of a global pool and a dense classifier; the window dwarfs the
    receptive field, which is where streaming pays off most.
    """
    nodes = [
        _conv("conv1", "input", in_channels, hidden, 5, seed),
        _relu("relu1", "conv1", hidden),
        _conv("conv2", "relu1", hidden, hidden, 5, seed + 1),
        _relu("relu2", "conv2", hidden),
        {"id": "pool", "input": "relu2", "kind": "MaxPool", "kernel": 2, "stride": 2,
         "in_channels": hidden, "out_channels": hidden},
        {"id": "gpool", "input": "pool", "kind": pool_kind,
         "in_channels": hidden, "out_channels": hidden},
        {"id": "head", "input": "gpool", "kind": "Dense",
         "in_channels": hidden, "out_channels": classes,
         "weights": {"seed": seed + 2, "scale": float(1.0 / np.sqrt(hidden))}},
    ]
    return graph_from_dict({
        "input_channels": in_channels,
        "window": {"l": l, "s": s},
        "nodes": nodes,
    })


def shallow_conv_chain(depth: int = 3, channels: int = 4, kernel: int = 3,
                       l: int = 40, s: int = 1, seed: int = 3) -> ModelGraph:
    """Stride-1 conv/relu chain with no global head (streams column by column)."""
    nodes = []
    prev = "input"
    for i in range(depth):
        nodes.append(_conv(f"conv{i}", prev, channels, channels, kernel, seed + i))
        nodes.append(_relu(f"relu{i}", f"conv{i}", channels))
        prev = f"relu{i}"
    return graph_from_dict({
        "input_channels": channels,
        "window": {"l": l, "s": s},
        "nodes": nodes,
    })


def attention_classifier(l: int = 64, s: int = 4, channels: int = 6,
                         classes: int = 2, seed: int = 23) -> ModelGraph:
    """Conv front end with a single-head attention aggregator and dense top."""
    nodes = [
        _conv("conv1", "input", channels, channels, 3, seed),
        _relu("relu1", "conv1", channels),
        {"id": "attn", "input": "relu1", "kind": "Attention",
         "in_channels": channels, "out_channels": channels,
         "weights": {"seed": seed + 1, "scale": float(1.0 / np.sqrt(channels))}},
        {"id": "head", "input": "attn", "kind": "Dense",
         "in_channels": channels, "out_channels": classes,
         "weights": {"seed": seed + 2, "scale": float(1.0 / np.sqrt(channels))}},
    ]
    return graph_from_dict({
        "input_channels": channels,
        "window": {"l": l, "s": s},
        "nodes": nodes,
    })


def random_stream(seed: int, channels: int, length: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((channels, length)).astype(np.float32)


def random_model(seed: int, max_local: int = 7, max_channels: int = 8,
                 head: Optional[str] = None) -> ModelGraph:
    """Random legal chain: mixed local operators, one aggregator head.

    Tracks reach and cumulative stride while drawing, so residual Adds are
    only placed where alignment is legal, and the window stride is always
    a multiple of the downsampling product. Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    ch = int(rng.integers(1, max_channels + 1))
    in_channels = ch
    nodes: list[dict] = []
    prev, reach, stride = "input", 1, 1
    # residual candidates: (id, channels, reach, stride)
    candidates = [("input", ch, 1, 1)]
    uid = 0

    def fresh(kind):
        nonlocal uid
        uid += 1
        return f"{kind}{uid}"

    n_local = int(rng.integers(1, max_local + 1))
    for _ in range(n_local):
        pick = rng.random()
        if pick < 0.45:
            k = int(rng.integers(1, 5))
            d = int(rng.integers(1, 4)) if k > 1 else 1
            s_op = int(rng.integers(1, 3)) if rng.random() < 0.3 else 1
            out_ch = int(rng.integers(1, max_channels + 1))
            nid = fresh("conv")
            nodes.append(_conv(nid, prev, ch, out_ch, k, int(rng.integers(0, 2 ** 31)),
                               d=d, s=s_op))
            reach += (k - 1) * d * stride
            stride *= s_op
            ch = out_ch
        elif pick < 0.6:
            k = int(rng.integers(2, 4))
            s_op = int(rng.integers(1, 3))
            kind = "MaxPool" if rng.random() < 0.5 else "AvgPool"
            nid = fresh("pool")
            nodes.append({"id": nid, "input": prev, "kind": kind, "kernel": k,
                          "stride": s_op, "in_channels": ch, "out_channels": ch})
            reach += (k - 1) * stride
            stride *= s_op
        elif pick < 0.8:
            nid = fresh("relu")
            nodes.append(_relu(nid, prev, ch))
        else:
            legal = [c for c in candidates
                     if c[1] == ch and c[3] == stride and (reach - c[2]) % stride == 0]
            if not legal:
                continue
            side = legal[int(rng.integers(0, len(legal)))]
            nid = fresh("add")
            nodes.append({"id": nid, "input": [prev, side[0]], "kind": "Add",
                          "in_channels": ch, "out_channels": ch})
        prev = nid
        candidates.append((prev, ch, reach, stride))

    head = head or ["GlobalAvgPool", "GlobalMaxPool", "Dense", "Attention"][
        int(rng.integers(0, 4))]
    if head in ("GlobalAvgPool", "GlobalMaxPool"):
        nodes.append({"id": "head", "input": prev, "kind": head,
                      "in_channels": ch, "out_channels": ch})
        head_ch = ch
    else:
        head_ch = int(rng.integers(1, max_channels + 1))
        nodes.append({"id": "head", "input": prev, "kind": head,
                      "in_channels": ch, "out_channels": head_ch,
                      "weights": {"seed": int(rng.integers(0, 2 ** 31)),
                                  "scale": float(1.0 / np.sqrt(ch))}})
    prev = "head"
    if rng.random() < 0.4:
        nodes.append(_relu("post_relu", prev, head_ch))
        prev = "post_relu"
    if rng.random() < 0.4:
        out_ch = int(rng.integers(1, 5))
        nodes.append({"id": "post_dense", "input": prev, "kind": "Dense",
                      "in_channels": head_ch, "out_channels": out_ch,
                      "weights": {"seed": int(rng.integers(0, 2 ** 31)),
                                  "scale": float(1.0 / np.sqrt(head_ch))}})

    trigger = int(rng.integers(1, 4))
    s_win = stride * trigger
    n_f = int(rng.integers(2, 6))
    l = reach + stride * (n_f - 1)
    while l < s_win:
        n_f += 1
        l = reach + stride * (n_f - 1)
    return graph_from_dict({
        "input_channels": in_channels,
        "window": {"l": l, "s": s_win},
        "nodes": nodes,
    })
