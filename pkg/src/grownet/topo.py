"""Where to grow: insertion sensitivity of the loss to a new residual layer.

For a trained network, the loss change from inserting a layer with weights
eps * Theta at interface l is J(eps) = J(0) - eps^2 theta' Q_l theta + o(eps^2)
where theta = vec(Theta) row-major. Q_l is exactly block diagonal with n
blocks of size n x n; block r couples only row r of Theta and equals

    B_r = 0.5 * sigma''(0) * sum_s p_{s,l}[r] * x_{s,l} x_{s,l}'

so the best unit direction and the leading loss decrease come from the top
eigenpairs of the blocks. An interface scan ranks all interfaces by the
attainable decrease and proposes where to insert and with what direction.
"""

from dataclasses import dataclass

import numpy as np

from . import network
from .linalg import top_eigenpair


@dataclass
class InterfaceReport:
    """Scan result at one interface."""

    l: int
    lam: float
    m: int
    top_block_eigs: list
    phi: np.ndarray
    score: float


@dataclass
class TopoReport:
    """Scan result across all interfaces."""

    interfaces: list
    chosen: int
    mode: str
    max_score: float

    @property
    def no_insertion(self):
        return self.chosen is None

    def best(self):
        if self.chosen is None:
            return None
        for entry in self.interfaces:
            if entry.l == self.chosen:
                return entry
        return None


def assemble_blocks(net, trace, position):
    """The n sensitivity blocks at one interface, each (n, n) symmetric."""
    if trace.adjoints is None:
        raise ValueError("trace has no adjoints (run adjoint first)")
    if not 1 <= position <= net.hidden_count:
        raise ValueError(
            "interface must be in 1..%d, got %d" % (net.hidden_count, position)
        )
    x = trace.states[position]
    p = trace.adjoints[position]
    c = 0.5 * net.act.d2_at_zero
    blocks = []
    for r in range(net.spec.n):
        m = c * ((x * p[:, r : r + 1]).T @ x)
        blocks.append(0.5 * (m + m.T))
    return blocks


def auto_width(top_eigs, eps_s):
    """Number of blocks to combine: the largest m with all of the top-m
    eigenvalues positive and within relative gap eps_s of the leader."""
    if not 0.0 <= eps_s <= 1.0:
        raise ValueError("eps_s must lie in [0, 1]")
    lam1 = top_eigs[0]
    if lam1 <= 0.0:
        return 0
    m = 0
    for lam in top_eigs:
        if lam <= 0.0 or (lam1 - lam) / lam1 > eps_s:
            break
        m += 1
    return m


def select_direction(blocks, mode, m=1, eps_s=0.5):
    """Pick blocks at one interface and combine their leading eigenvectors.

    Returns (lam, m_used, top_block_eigs, phi): lam is the summed selected
    eigenvalues (or the best nonpositive one when nothing qualifies, with
    m_used = 0 and phi = None); phi is the unit direction of length n^2 built
    by embedding each selected block's leading eigenvector into its row slot
    and scaling by 1/sqrt(m).
    """
    if mode not in ("fixed", "auto"):
        raise ValueError("mode must be 'fixed' or 'auto'")
    n = blocks[0].shape[0]
    pairs = [top_eigenpair(b) for b in blocks]
    order = sorted(range(len(pairs)), key=lambda r: (-pairs[r][0], r))
    top_eigs = [pairs[r][0] for r in order]
    if mode == "fixed":
        if m < 1:
            raise ValueError("m must be >= 1 in fixed mode")
        m_used = min(m, sum(1 for lam in top_eigs if lam > 0.0))
    else:
        m_used = auto_width(top_eigs, eps_s)
    if m_used == 0:
        return top_eigs[0], 0, top_eigs, None
    lam = float(sum(top_eigs[:m_used]))
    phi = np.zeros(n * n)
    for r in order[:m_used]:
        phi[r * n : (r + 1) * n] = pairs[r][1]
    phi /= np.sqrt(m_used)
    return lam, m_used, top_eigs, phi


def scan(net, trace, mode="fixed", m=1, eps_s=0.5):
    """Rank every interface by attainable loss decrease.

    score = lam (fixed mode) or lam / m_used (auto mode); the chosen interface
    maximizes the score, ties resolved to the smallest l by a strict-greater
    sweep in ascending l. chosen is None when no interface yields a direction.
    """
    interfaces = []
    chosen = None
    max_score = -np.inf
    for l in range(1, net.hidden_count + 1):
        blocks = assemble_blocks(net, trace, l)
        lam, m_used, top_eigs, phi = select_direction(blocks, mode, m=m, eps_s=eps_s)
        score = lam / m_used if (mode == "auto" and m_used > 0) else lam
        interfaces.append(InterfaceReport(
            l=l, lam=lam, m=m_used, top_block_eigs=top_eigs, phi=phi, score=score,
        ))
        if m_used > 0 and score > max_score:
            max_score = score
            chosen = l
    if chosen is None:
        max_score = max((e.score for e in interfaces), default=-np.inf)
    return TopoReport(interfaces=interfaces, chosen=chosen, mode=mode,
                      max_score=float(max_score))


def scan_dataset(net, inputs, labels, mode="fixed", m=1, eps_s=0.5):
    """Forward + adjoint on a dataset, then scan."""
    trace, _ = network.forward(net, inputs, labels)
    network.adjoint(net, trace)
    return scan(net, trace, mode=mode, m=m, eps_s=eps_s)


def predicted_decrease(report):
    """Second-order loss decrease per eps^2 at the chosen interface."""
    best = report.best()
    if best is None:
        return 0.0
    return float(best.lam)


def numerical_derivative(net, inputs, labels, position, phi, eps_list):
    """Finite-difference estimate of the insertion derivative at one interface.

    For each eps in eps_list (positive, strictly descending) returns
    (J(net) - J(net with eps*phi inserted at position)) / eps^2, which
    converges to phi' Q_l phi as eps -> 0.
    """
    eps_arr = [float(e) for e in eps_list]
    if not eps_arr:
        raise ValueError("eps_list must be non-empty")
    if any(e <= 0.0 for e in eps_arr):
        raise ValueError("eps_list entries must be positive")
    if any(b >= a for a, b in zip(eps_arr, eps_arr[1:])):
        raise ValueError("eps_list must be strictly descending")
    j0 = net.loss(inputs, labels)
    out = []
    for eps in eps_arr:
        grown = network.insert_layer(net, position, phi, eps)
        out.append((j0 - grown.loss(inputs, labels)) / (eps * eps))
    return np.array(out)


def transfer_rank(net, inputs, labels, m=1):
    """Interfaces of a trained network ranked for fine-tuning on new data.

    Runs the fixed-mode scan against the given dataset and returns the
    interface entries sorted by score, best first (ties to smaller l).
    """
    report = scan_dataset(net, inputs, labels, mode="fixed", m=m)
    ranked = sorted(report.interfaces, key=lambda e: (-e.score, e.l))
    return report, ranked


def report_to_dict(report):
    """JSON-ready dict: interfaces (l, lambda, m, top_block_eigs), chosen, mode."""
    return {
        "interfaces": [
            {
                "l": entry.l,
                "lambda": entry.lam,
                "m": entry.m,
                "top_block_eigs": list(entry.top_block_eigs),
            }
            for entry in report.interfaces
        ],
        "chosen": report.chosen,
        "mode": report.mode,
    }
