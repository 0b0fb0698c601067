"""Exact enumeration over a four-variable discrete SCM: U -> G -> R -> L <- U.

``U`` is the hidden confounder, ``G`` the treatment (the claim-evidence
graph), ``R`` the mediator (the reasoning path) and ``L`` the label. The path
``R`` depends on ``G`` only, so the front-door formula recovers
``P(L | do(G))`` from the observational joint of ``(G, R, L)``.

File format
-----------
Plain text, ``#`` starts a comment, blank lines ignored::

    scm v1
    card U <int>
    card G <int>
    card R <int>
    card L <int>
    table P_U           # 1 row of |U| numbers
    table P_G_given_U   # |U| rows of |G| numbers, row u
    table P_R_given_G   # |G| rows of |R| numbers, row g
    table P_L_given_RU  # |R|*|U| rows of |L| numbers, row (r, u), u fastest

Each ``table`` header is followed by exactly the listed number of rows of
whitespace-separated decimals.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MAX_CARD",
    "DiscreteScm",
    "observational",
    "conditional_L_given_G",
    "interventional",
    "frontdoor_estimate",
    "random_scm",
    "confounded_scm",
    "verify",
    "format_scm",
    "parse_scm",
    "load_scm",
    "save_scm",
]

MAX_CARD = 8
_ROW_TOL = 1e-12


@dataclass
class DiscreteScm:
    P_U: np.ndarray  # (|U|,)
    P_G_given_U: np.ndarray  # (|U|, |G|)
    P_R_given_G: np.ndarray  # (|G|, |R|)
    P_L_given_RU: np.ndarray  # (|R|, |U|, |L|)

    def __post_init__(self):
        self.P_U = np.asarray(self.P_U, dtype=np.float64)
        self.P_G_given_U = np.asarray(self.P_G_given_U, dtype=np.float64)
        self.P_R_given_G = np.asarray(self.P_R_given_G, dtype=np.float64)
        self.P_L_given_RU = np.asarray(self.P_L_given_RU, dtype=np.float64)
        nu, ng, nr, nl = self.cardinalities
        expected = {
            "P_U": (self.P_U, (nu,)),
            "P_G_given_U": (self.P_G_given_U, (nu, ng)),
            "P_R_given_G": (self.P_R_given_G, (ng, nr)),
            "P_L_given_RU": (self.P_L_given_RU, (nr, nu, nl)),
        }
        for name, (table, shape) in expected.items():
            if table.shape != shape:
                raise ValueError(f"{name} has shape {table.shape}, expected {shape}")
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise ValueError(f"{name} must hold finite non-negative probabilities")
            sums = table.sum(axis=-1)
            if np.any(np.abs(sums - 1.0) > _ROW_TOL):
                raise ValueError(f"{name} rows must sum to 1 (max deviation {np.abs(sums - 1).max():.3g})")
        for c in self.cardinalities:
            if not 2 <= c <= MAX_CARD:
                raise ValueError(f"cardinalities must lie in [2, {MAX_CARD}], got {self.cardinalities}")

    @property
    def cardinalities(self) -> tuple[int, int, int, int]:
        return (
            self.P_U.shape[0],
            self.P_G_given_U.shape[1],
            self.P_R_given_G.shape[1],
            self.P_L_given_RU.shape[2],
        )


def observational(scm: DiscreteScm) -> np.ndarray:
    """Joint ``P(G, R, L)`` with ``U`` summed out, shape ``|G| x |R| x |L|``."""
    nu, ng, nr, nl = scm.cardinalities
    joint = np.zeros((ng, nr, nl))
    for u in range(nu):
        for g in range(ng):
            for r in range(nr):
                w = scm.P_U[u] * scm.P_G_given_U[u, g] * scm.P_R_given_G[g, r]
                joint[g, r] += w * scm.P_L_given_RU[r, u]
    return joint


def conditional_L_given_G(scm: DiscreteScm, g: int) -> np.ndarray:
    """Observational ``P(L | G=g)``."""
    joint = observational(scm)[g]
    total = joint.sum()
    if total == 0:
        raise ValueError(f"P(G={g}) is zero; the conditional is undefined")
    return joint.sum(axis=0) / total


def interventional(scm: DiscreteScm, g: int) -> np.ndarray:
    """``P(L | do(G=g))`` by truncated factorization (the ``U -> G`` factor removed)."""
    nu, ng, nr, nl = scm.cardinalities
    if not 0 <= g < ng:
        raise ValueError(f"g={g} out of range for |G|={ng}")
    out = np.zeros(nl)
    for u in range(nu):
        for r in range(nr):
            out += scm.P_U[u] * scm.P_R_given_G[g, r] * scm.P_L_given_RU[r, u]
    return out


def frontdoor_estimate(scm: DiscreteScm, g: int) -> np.ndarray:
    """Front-door adjustment computed from the observational joint alone.

    ``sum_r P(r | g) * sum_g' P(L | r, g') P(g')``. Terms whose conditioning
    event has zero probability are dropped and the inner sum is renormalized
    over the remaining ``g'``. Under positivity nothing is dropped and the
    weights sum to one up to rounding.
    """
    joint = observational(scm)
    ng, nr, nl = joint.shape
    if not 0 <= g < ng:
        raise ValueError(f"g={g} out of range for |G|={ng}")
    p_g = joint.sum(axis=(1, 2))
    p_gr = joint.sum(axis=2)
    out = np.zeros(nl)
    if p_g[g] == 0:
        return out
    for r in range(nr):
        p_r_given_g = p_gr[g, r] / p_g[g]
        if p_r_given_g == 0:
            continue
        inner = np.zeros(nl)
        mass = 0.0
        for gp in range(ng):
            if p_gr[gp, r] == 0:
                continue
            inner += joint[gp, r] / p_gr[gp, r] * p_g[gp]
            mass += p_g[gp]
        out += p_r_given_g * inner / mass
    return out


def _dirichlet_rows(rng, rows: int, cols: int) -> np.ndarray:
    t = rng.dirichlet(np.ones(cols), size=rows)
    return t / t.sum(axis=-1, keepdims=True)


def random_scm(rng: np.random.Generator | int, cards: tuple[int, int, int, int] | None = None) -> DiscreteScm:
    """Full-support tables drawn from a symmetric Dirichlet(1)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if cards is None:
        cards = tuple(int(c) for c in rng.integers(2, MAX_CARD + 1, size=4))
    nu, ng, nr, nl = cards
    return DiscreteScm(
        _dirichlet_rows(rng, 1, nu)[0],
        _dirichlet_rows(rng, nu, ng),
        _dirichlet_rows(rng, ng, nr),
        _dirichlet_rows(rng, nr * nu, nl).reshape(nr, nu, nl),
    )


def confounded_scm(strength: float = 0.9) -> DiscreteScm:
    """Binary SCM where ``G`` copies ``U`` and ``L`` mostly reads ``U``.

    ``R`` is a noisy copy of ``G`` so every front-door term stays defined.
    """
    q = float(strength)
    return DiscreteScm(
        P_U=[0.5, 0.5],
        P_G_given_U=[[1.0, 0.0], [0.0, 1.0]],
        P_R_given_G=[[0.8, 0.2], [0.2, 0.8]],
        P_L_given_RU=[[[q, 1 - q], [1 - q, q]], [[q, 1 - q], [1 - q, q]]],
    )


def verify(n: int = 200, seed: int = 0) -> dict:
    """Front-door vs. truncated-factorization agreement over random SCMs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        scm = random_scm(rng)
        for g in range(scm.cardinalities[1]):
            worst = max(worst, float(np.abs(frontdoor_estimate(scm, g) - interventional(scm, g)).max()))
    conf = confounded_scm()
    gap = max(
        float(np.abs(conditional_L_given_G(conf, g) - interventional(conf, g)).max())
        for g in range(conf.cardinalities[1])
    )
    return {"n_scms": n, "seed": seed, "max_frontdoor_deviation": worst, "confounded_gap": gap}


# ---------------------------------------------------------------- text format


def format_scm(scm: DiscreteScm) -> str:
    nu, ng, nr, nl = scm.cardinalities
    fmt = lambda row: " ".join(f"{v:.17g}" for v in row)  # noqa: E731
    lines = ["scm v1"] + [f"card {n} {c}" for n, c in zip("UGRL", (nu, ng, nr, nl))]
    lines += ["table P_U", fmt(scm.P_U)]
    lines += ["table P_G_given_U"] + [fmt(r) for r in scm.P_G_given_U]
    lines += ["table P_R_given_G"] + [fmt(r) for r in scm.P_R_given_G]
    lines += ["table P_L_given_RU"] + [fmt(r) for r in scm.P_L_given_RU.reshape(nr * nu, nl)]
    return "\n".join(lines) + "\n"


def parse_scm(text: str) -> DiscreteScm:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != "scm v1":
        raise ValueError("SCM file must start with 'scm v1'")
    cards: dict[str, int] = {}
    tables: dict[str, list[list[float]]] = {}
    current = None
    for ln in lines[1:]:
        head, *rest = ln.split()
        if head == "card":
            if len(rest) != 2 or rest[0] not in "UGRL":
                raise ValueError(f"bad cardinality line: {ln!r}")
            cards[rest[0]] = int(rest[1])
            current = None
        elif head == "table":
            if len(rest) != 1:
                raise ValueError(f"bad table header: {ln!r}")
            current = rest[0]
            tables[current] = []
        elif current is not None:
            tables[current].append([float(x) for x in ln.split()])
        else:
            raise ValueError(f"unexpected line: {ln!r}")
    missing = set("UGRL") - cards.keys()
    if missing:
        raise ValueError(f"missing cardinalities for {sorted(missing)}")
    need = {"P_U", "P_G_given_U", "P_R_given_G", "P_L_given_RU"} - tables.keys()
    if need:
        raise ValueError(f"missing tables {sorted(need)}")
    nu, ng, nr, nl = (cards[v] for v in "UGRL")
    try:
        p_u = np.array(tables["P_U"]).reshape(nu)
        p_gu = np.array(tables["P_G_given_U"]).reshape(nu, ng)
        p_rg = np.array(tables["P_R_given_G"]).reshape(ng, nr)
        p_lru = np.array(tables["P_L_given_RU"]).reshape(nr, nu, nl)
    except ValueError as exc:
        raise ValueError(f"table size does not match cardinalities: {exc}") from None
    return DiscreteScm(p_u, p_gu, p_rg, p_lru)


def load_scm(path: str | Path) -> DiscreteScm:
    return parse_scm(Path(path).read_text(encoding="utf-8"))


def save_scm(scm: DiscreteScm, path: str | Path) -> None:
    Path(path).write_text(format_scm(scm), encoding="utf-8")
