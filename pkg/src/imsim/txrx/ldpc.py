"""Binary LDPC codes: PEG construction, systematic encoding, min-sum decoding."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..seeding import rng_for


def gf2_rref(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2); returns (matrix, pivot columns)."""
    a = (np.asarray(a) % 2).astype(np.uint8).copy()
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hit = np.nonzero(a[r:, c])[0]
        if hit.size == 0:
            continue
        p = r + hit[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        others = np.nonzero(a[:, c])[0]
        others = others[others != r]
        a[others] ^= a[r]
        pivots.append(c)
        r += 1
    return a, pivots


class LdpcCode:
    """A systematic binary linear code defined by its parity-check matrix.

    Columns are ordered so that the first ``k_info`` codeword bits are the
    information bits and ``generator = [I | P]``.
    """

    def __init__(self, parity_check, seed: int | None = None):
        h = (np.asarray(parity_check) % 2).astype(np.uint8)
        if h.ndim != 2:
            raise ConfigError("parity_check must be a 2-D binary matrix")
        rref, pivots = gf2_rref(h)
        rank = len(pivots)
        n = h.shape[1]
        info_cols = [c for c in range(n) if c not in set(pivots)]
        order = np.array(info_cols + pivots)
        self.source_matrix = h
        # equivalent code with parity positions last
        self.parity_check = h[:, order]
        rref = rref[:rank][:, order]
        k = n - rank
        # rref = [A | I] so parity = A @ info
        a = rref[:, :k]
        self.generator = np.concatenate([np.eye(k, dtype=np.uint8), a.T % 2], axis=1)
        self.n_code = n
        self.k_info = k
        self.seed = seed
        self.column_order = order
        self._build_graph()

    def _build_graph(self):
        h = self.parity_check
        chk, var = np.nonzero(h)
        self.edge_check = chk
        self.edge_var = var
        self.n_checks = h.shape[0]
        deg = np.bincount(chk, minlength=self.n_checks)
        self.max_check_degree = int(deg.max()) if deg.size else 0
        # padded [n_checks][dc] table of edge ids, -1 where absent
        table = -np.ones((self.n_checks, self.max_check_degree), dtype=np.int64)
        fill = np.zeros(self.n_checks, dtype=np.int64)
        for e, c in enumerate(chk):
            table[c, fill[c]] = e
            fill[c] += 1
        self.check_edges = table
        # edge -> variable incidence, used as a dense matmul for gathering
        inc = np.zeros((chk.size, self.n_code))
        inc[np.arange(chk.size), var] = 1.0
        self.edge_incidence = inc

    @property
    def rate(self) -> float:
        return self.k_info / self.n_code

    @classmethod
    def peg(cls, n_code: int = 128, k_info: int = 64, var_degree: int = 3,
            seed: int = 0, max_tries: int = 50) -> "LdpcCode":
        """Progressive edge growth; retries seeds until H has full row rank."""
        n_checks = n_code - k_info
        for attempt in range(max_tries):
            h = peg_matrix(n_code, n_checks, var_degree, rng_for(seed, "code", attempt))
            _, piv = gf2_rref(h)
            if len(piv) == n_checks:
                return cls(h, seed=seed)
        raise ConfigError("could not build a full-rank PEG matrix")

    def is_codeword(self, c) -> np.ndarray | bool:
        c = np.asarray(c, dtype=np.int64)
        syn = (c @ self.parity_check.T.astype(np.int64)) % 2
        return ~np.any(syn, axis=-1)

    def save(self, path) -> None:
        """Text format: header line then one row of column indices per check.

        The matrix is written in its original column order, so loading
        rebuilds the same systematic form.
        """
        lines = [f"# ldpc n_code={self.n_code} k_info={self.k_info} "
                 f"seed={self.seed if self.seed is not None else -1}"]
        for row in self.source_matrix:
            lines.append(" ".join(str(c) for c in np.nonzero(row)[0]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "LdpcCode":
        text = Path(path).read_text().splitlines()
        if not text or not text[0].startswith("# ldpc"):
            raise ConfigError(f"{path}: missing ldpc header")
        fields = dict(tok.split("=") for tok in text[0].split()[2:])
        n = int(fields["n_code"])
        rows = [line for line in text[1:] if line.strip()]
        h = np.zeros((len(rows), n), dtype=np.uint8)
        for r, line in enumerate(rows):
            h[r, [int(t) for t in line.split()]] = 1
        seed = int(fields.get("seed", -1))
        code = cls(h, seed=None if seed < 0 else seed)
        if code.k_info != int(fields["k_info"]):
            raise ConfigError(f"{path}: header k_info disagrees with matrix rank")
        return code


def peg_matrix(n_code: int, n_checks: int, var_degree: int,
               rng: np.random.Generator) -> np.ndarray:
    """Parity-check matrix from the progressive edge-growth heuristic.

    For every variable node, each new edge goes to a check node outside the
    node's current breadth-first neighbourhood (or, if every check is
    reachable, one at maximum depth), breaking ties by lowest check degree and
    then at random. Checks are capped at ``ceil(n_code * var_degree /
    n_checks)`` edges, so (128, 64, 3) gives a regular (3, 6) matrix.
    """
    cap = -(-n_code * var_degree // n_checks)
    var_nbrs: list[list[int]] = [[] for _ in range(n_code)]
    chk_nbrs: list[list[int]] = [[] for _ in range(n_checks)]
    chk_deg = np.zeros(n_checks, dtype=np.int64)
    for v in range(n_code):
        for d in range(var_degree):
            if d == 0:
                cand = np.arange(n_checks)
            else:
                cand = _peg_candidates(v, var_nbrs, chk_nbrs, n_checks)
            cand = cand[~np.isin(cand, var_nbrs[v]) & (chk_deg[cand] < cap)]
            if cand.size == 0:
                # every preferred check is full: take any open one
                cand = np.nonzero(chk_deg < cap)[0]
                cand = cand[~np.isin(cand, var_nbrs[v])]
            low = cand[chk_deg[cand] == chk_deg[cand].min()]
            c = int(rng.choice(low))
            var_nbrs[v].append(c)
            chk_nbrs[c].append(v)
            chk_deg[c] += 1
    h = np.zeros((n_checks, n_code), dtype=np.uint8)
    for v, cs in enumerate(var_nbrs):
        h[cs, v] = 1
    return h


def _peg_candidates(v, var_nbrs, chk_nbrs, n_checks) -> np.ndarray:
    depth = np.full(n_checks, -1)
    seen_var = {v}
    frontier = deque()
    for c in var_nbrs[v]:
        depth[c] = 0
        frontier.append(c)
    while frontier:
        c = frontier.popleft()
        for u in chk_nbrs[c]:
            if u in seen_var:
                continue
            seen_var.add(u)
            for c2 in var_nbrs[u]:
                if depth[c2] < 0:
                    depth[c2] = depth[c] + 1
                    frontier.append(c2)
    unreached = np.nonzero(depth < 0)[0]
    if unreached.size:
        return unreached
    return np.nonzero(depth == depth.max())[0]


def ldpc_encode(info_bits, code: LdpcCode) -> np.ndarray:
    info = np.asarray(info_bits, dtype=np.int64)
    if info.shape[-1] != code.k_info:
        raise ConfigError(f"expected {code.k_info} info bits, got {info.shape[-1]}")
    return ((info @ code.generator.astype(np.int64)) % 2).astype(np.uint8)


@dataclass
class DecodeResult:
    bits: np.ndarray
    converged: np.ndarray | bool
    iters: np.ndarray | int
    llr: np.ndarray

    def info_bits(self, code: LdpcCode) -> np.ndarray:
        return self.bits[..., :code.k_info]


def bp_decode(llrs, code: LdpcCode, max_iter: int = 25,
              scale: float = 0.75) -> DecodeResult:
    """Scaled min-sum belief propagation.

    ``llrs`` follow the convention ``log P(b=0) / P(b=1)``, shape ``[n_code]``
    or ``[batch][n_code]``. Decoding stops per frame once every parity check
    holds after an iteration. A frame counts as converged only if its parity
    checks hold and no posterior LLR is exactly zero (undecided bit).
    """
    llr = np.asarray(llrs, dtype=np.float64)
    single = llr.ndim == 1
    if single:
        llr = llr[None]
    if llr.shape[-1] != code.n_code:
        raise ConfigError(f"expected {code.n_code} LLRs, got {llr.shape[-1]}")
    batch = llr.shape[0]
    ev, table = code.edge_var, code.check_edges
    inc = code.edge_incidence
    pad = table < 0
    safe = np.where(pad, 0, table)
    hT = code.parity_check.T.astype(np.int64)

    c2v = np.zeros((batch, ev.size))
    post = llr.copy()
    done = np.zeros(batch, dtype=bool)
    iters = np.zeros(batch, dtype=np.int64)
    out_post = llr.copy()
    active = np.arange(batch)
    for it in range(1, max_iter + 1):
        a_llr, a_c2v, a_post = llr[active], c2v[active], post[active]
        v2c = a_post[:, ev] - a_c2v
        m = v2c[:, safe]
        mag = np.where(pad, np.inf, np.abs(m))
        sgn = np.where(pad, 1.0, np.where(m < 0, -1.0, 1.0))
        total_sign = np.prod(sgn, axis=-1, keepdims=True)
        order = np.argsort(mag, axis=-1)
        min1 = np.take_along_axis(mag, order[..., :1], axis=-1)
        min2 = np.take_along_axis(mag, order[..., 1:2], axis=-1) if mag.shape[-1] > 1 \
            else np.full_like(min1, np.inf)
        is_min = np.arange(mag.shape[-1]) == order[..., :1]
        ext = np.where(is_min, min2, min1)
        new = scale * total_sign * sgn * np.where(np.isinf(ext), 0.0, ext)
        a_c2v = np.zeros_like(a_c2v)
        a_c2v[:, table[~pad]] = new[:, ~pad]
        a_post = a_llr + a_c2v @ inc
        c2v[active], post[active] = a_c2v, a_post
        hard = (a_post < 0).astype(np.int64)
        ok = ~np.any((hard @ hT) % 2, axis=-1) & np.all(a_post != 0, axis=-1)
        iters[active] = it
        finished = active[ok]
        done[finished] = True
        out_post[finished] = a_post[ok]
        active = active[~ok]
        if active.size == 0:
            break
    out_post[active] = post[active]
    bits = (out_post < 0).astype(np.uint8)
    if single:
        return DecodeResult(bits[0], bool(done[0]), int(iters[0]), out_post[0])
    return DecodeResult(bits, done, iters, out_post)
