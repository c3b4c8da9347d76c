"""Checkpoints: self-describing, versioned, bit-exact model serialization.

The file is JSON with every float64 array stored as base64-encoded
little-endian bytes, so save -> load reproduces parameters exactly. The
`kind` field selects the model family: "residual-net" or "scalar-chain".
"""

import base64
import json

import numpy as np

from .activations import make_admissible
from .network import Network, NetworkSpec
from .rbf import RbfChain

FORMAT = "grownet-checkpoint"
VERSION = 1


def _encode(a):
    a = np.ascontiguousarray(np.asarray(a, dtype="<f8"))
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d):
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(
        np.float64, copy=True)


def _net_payload(net):
    spec = net.spec
    return {
        "kind": "residual-net",
        "spec": {
            "n0": spec.n0, "nT": spec.nT, "n": spec.n,
            "hidden_count": spec.hidden_count,
            "activation_pair": spec.activation_pair,
            "input_sparsity": spec.input_sparsity,
            "loss_kind": spec.loss_kind,
        },
        "input_trainable": bool(net.input_trainable),
        "hidden_trainable": [bool(t) for t in net.hidden_trainable],
        "w_in": _encode(net.w_in), "b_in": _encode(net.b_in),
        "mask_in": _encode(net.mask_in),
        "ws": [_encode(w) for w in net.ws],
        "bs": [_encode(b) for b in net.bs],
        "w_out": _encode(net.w_out), "b_out": _encode(net.b_out),
    }


def _net_from_payload(p):
    spec = NetworkSpec(**p["spec"])
    net = Network(
        spec, make_admissible(spec.activation_pair),
        _decode(p["w_in"]), _decode(p["b_in"]), _decode(p["mask_in"]),
        [_decode(w) for w in p["ws"]], [_decode(b) for b in p["bs"]],
        _decode(p["w_out"]), _decode(p["b_out"]),
        input_trainable=p["input_trainable"],
        hidden_trainable=p["hidden_trainable"],
    )
    if len(net.ws) != spec.hidden_count:
        raise ValueError("checkpoint layer arrays disagree with hidden_count")
    return net


def _chain_payload(chain):
    return {
        "kind": "scalar-chain",
        "c": chain.c,
        "thetas": _encode(chain.thetas),
        "trainable_rows": [bool(t) for t in chain.trainable_rows],
    }


def _chain_from_payload(p):
    chain = RbfChain(_decode(p["thetas"]), p["c"])
    chain.trainable_rows = np.array(p["trainable_rows"], dtype=bool)
    return chain


def save_checkpoint(model, path):
    if isinstance(model, Network):
        payload = _net_payload(model)
    elif isinstance(model, RbfChain):
        payload = _chain_payload(model)
    else:
        raise ValueError("cannot checkpoint %r" % type(model).__name__)
    payload["format"] = FORMAT
    payload["version"] = VERSION
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT:
        raise ValueError("%s: not a checkpoint file" % path)
    if payload.get("version") != VERSION:
        raise ValueError(
            "%s: unsupported checkpoint version %r" % (path, payload.get("version"))
        )
    kind = payload.get("kind")
    if kind == "residual-net":
        return _net_from_payload(payload)
    if kind == "scalar-chain":
        return _chain_from_payload(payload)
    raise ValueError("%s: unknown checkpoint kind %r" % (path, kind))
