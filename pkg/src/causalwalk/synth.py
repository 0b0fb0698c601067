"""Template-generated multi-hop claim verification data with an injectable shortcut.

Grammar
-------
Entities are opaque lowercase tokens. A claim with ``m`` hops names the full
chain::

    e0 r1 e1 who r2 e2 who ... who rm em

Every evidence sentence is either a relation triple ``X rel Y`` with ``rel``
drawn from the relation vocabulary (a claimed relation or its contradicting
counterpart), or one of the fixed shortcut sentences.

A verdict needs every claimed link ``(e_{k-1}, e_k)`` to be covered by a
triple with that subject and object. If any link is uncovered the result is
UNDETERMINED; otherwise a contradicting relation on any link gives REFUTES
and full agreement gives SUPPORTS.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "RELATIONS",
    "CONTRADICTS",
    "SHORTCUTS",
    "SPLITS",
    "GrammarError",
    "GeneratorConfig",
    "GeneratedExample",
    "generate",
    "template_logic_eval",
    "parse_claim",
    "write_split",
    "read_split",
    "write_dataset",
    "read_dataset",
    "phi_coefficient",
]

RELATIONS: dict[str, str] = {
    "endorsed": "denounced",
    "founded": "dissolved",
    "funds": "defunds",
    "hired": "fired",
    "praised": "criticized",
    "supplies": "boycotts",
    "advises": "ignores",
    "joined": "quit",
}
CONTRADICTS = {**RELATIONS, **{v: k for k, v in RELATIONS.items()}}
CLAIM_RELATIONS = tuple(RELATIONS)

SHORTCUTS: dict[str, str] = {
    "SUPPORTS": "this post was confirmed as accurate by the review desk",
    "REFUTES": "this post was flagged as misleading by the review desk",
    "NEI": "this post was marked as unverified by the review desk",
}
_SHORTCUT_TEXT = {v: k for k, v in SHORTCUTS.items()}

SPLITS = ("train", "dev", "test_id", "test_adversarial", "test_symmetric")
UNDETERMINED = "UNDETERMINED"

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class GrammarError(ValueError):
    """Raised for text outside the generator's template grammar."""


@dataclass(frozen=True)
class GeneratorConfig:
    n_train: int = 500
    n_dev: int = 100
    n_test: int = 200
    chain_length: int = 3
    n_distractors: int = 8
    classes: int = 2
    bias_strength: float = 0.0
    shortcut_rate: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.chain_length < 2:
            raise ValueError("chain_length must be >= 2")
        if self.n_distractors < 0:
            raise ValueError("n_distractors must be >= 0")
        if self.classes not in (2, 3):
            raise ValueError("classes must be 2 or 3")
        if not 0.0 <= self.bias_strength <= 1.0:
            raise ValueError("bias_strength must lie in [0, 1]")
        if not 0.0 <= self.shortcut_rate <= 1.0:
            raise ValueError("shortcut_rate must lie in [0, 1]")
        if 2 * self.chain_length + 1 > 20:
            raise ValueError("chain_length too large for the 20-sentence evidence limit")
        if self.chain_length + self.n_distractors + 1 > 20:
            raise ValueError("chain_length + n_distractors + 1 must not exceed 20")

    @property
    def labels(self) -> tuple[str, ...]:
        return ("SUPPORTS", "REFUTES") if self.classes == 2 else ("SUPPORTS", "REFUTES", "NEI")


@dataclass
class GeneratedExample:
    id: str
    claim: str
    evidence: list[str]
    evidence_labels: list[int]
    label: str
    has_shortcut: bool = False
    shortcut_agrees: bool = False
    shortcut_label: str | None = None
    entities: tuple[str, ...] = field(default=(), repr=False)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec.pop("entities")
        return rec

    @property
    def gold_evidence(self) -> list[str]:
        return [e for e, flag in zip(self.evidence, self.evidence_labels) if flag]


# ---------------------------------------------------------------- grammar


def _claim_text(entities: Sequence[str], relations: Sequence[str]) -> str:
    parts = [entities[0], relations[0], entities[1]]
    for rel, ent in zip(relations[1:], entities[2:]):
        parts += ["who", rel, ent]
    return " ".join(parts)


def parse_claim(claim: str) -> tuple[list[str], list[str]]:
    """Return ``(entities, relations)`` of a generated claim."""
    toks = claim.split()
    if len(toks) < 3 or (len(toks) - 3) % 3 != 0:
        raise GrammarError(f"not a chain claim: {claim!r}")
    entities, relations = [toks[0]], []
    for k in range(1, len(toks), 3):
        if k > 1 and toks[k - 1] != "who":
            raise GrammarError(f"not a chain claim: {claim!r}")
        rel, ent = toks[k], toks[k + 1]
        if rel not in RELATIONS:
            raise GrammarError(f"unknown claim relation {rel!r}")
        relations.append(rel)
        entities.append(ent)
    # re-align: tokens after the first triple come in (who, rel, ent) groups
    if _claim_text(entities, relations) != " ".join(toks):
        raise GrammarError(f"not a chain claim: {claim!r}")
    return entities, relations


def _parse_evidence(sentence: str):
    if sentence in _SHORTCUT_TEXT:
        return None
    toks = sentence.split()
    if len(toks) != 3 or toks[1] not in CONTRADICTS:
        raise GrammarError(f"evidence outside the template grammar: {sentence!r}")
    return toks[0], toks[1], toks[2]


def template_logic_eval(claim: str, evidence: Iterable[str]) -> str:
    """Exact verdict of ``claim`` given ``evidence``: SUPPORTS, REFUTES or UNDETERMINED."""
    entities, relations = parse_claim(claim)
    by_pair: dict[tuple[str, str], set[str]] = {}
    for sentence in evidence:
        triple = _parse_evidence(sentence)
        if triple is None:
            continue
        subj, rel, obj = triple
        by_pair.setdefault((subj, obj), set()).add(rel)
    contradicted = False
    for k, rel in enumerate(relations):
        stated = by_pair.get((entities[k], entities[k + 1]), set())
        confirms = rel in stated
        denies = CONTRADICTS[rel] in stated
        if not (confirms or denies):
            return UNDETERMINED
        if denies:
            contradicted = True
    return "REFUTES" if contradicted else "SUPPORTS"


# ---------------------------------------------------------------- generation


class _EntityPool:
    """Opaque three-syllable names, drawn without replacement."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set()

    def draw(self) -> str:
        while True:
            name = "".join(
                _CONSONANTS[self.rng.integers(len(_CONSONANTS))] + _VOWELS[self.rng.integers(len(_VOWELS))]
                for _ in range(3)
            )
            if name not in self.used:
                self.used.add(name)
                return name


def _any_relation(rng) -> str:
    return list(CONTRADICTS)[rng.integers(len(CONTRADICTS))]


def _distractors(rng, pool: _EntityPool, chains: Sequence[Sequence[str]], count: int) -> list[str]:
    """Near-claim triples that never cover a claimed link.

    Kinds: a reversed link, a skip between non-adjacent chain entities, a
    chain entity paired with an outsider, and two outsiders.
    """
    links = {(c[k], c[k + 1]) for c in chains for k in range(len(c) - 1)}
    out = []
    while len(out) < count:
        chain = chains[rng.integers(len(chains))]
        m = len(chain) - 1
        kind = rng.integers(4)
        if kind == 0:
            k = rng.integers(m)
            subj, obj = chain[k + 1], chain[k]
        elif kind == 1:
            i, j = sorted(rng.choice(m + 1, size=2, replace=False))
            if j == i + 1:
                continue
            subj, obj = (chain[i], chain[j]) if rng.random() < 0.5 else (chain[j], chain[i])
        elif kind == 2:
            ent, other = chain[rng.integers(m + 1)], pool.draw()
            subj, obj = (ent, other) if rng.random() < 0.5 else (other, ent)
        else:
            subj, obj = pool.draw(), pool.draw()
        if (subj, obj) in links:
            continue
        out.append(f"{subj} {_any_relation(rng)} {obj}")
    return out


def _shortcut_plan(rng, gold: Sequence[str], labels: Sequence[str], rate: float, bias: float, flipped: bool):
    """Shortcut polarity per example, or None for no shortcut.

    Proportions are realised exactly within each gold label: ``rate`` of the
    examples carry a shortcut, ``bias`` of those carry the biased polarity
    (the gold label, or another label when ``flipped``) and the rest get a
    polarity balanced over all labels. At ``bias=0`` neither presence nor
    polarity correlates with the label beyond rounding.
    """
    plan: list[str | None] = [None] * len(gold)
    for label in labels:
        idx = rng.permutation([i for i, g in enumerate(gold) if g == label])
        chosen = idx[: int(round(rate * len(idx)))]
        n_biased = int(round(bias * len(chosen)))
        others = [l for l in labels if l != label]
        biased = [others[k % len(others)] if flipped else label for k in range(n_biased)]
        rest = [labels[k % len(labels)] for k in range(len(chosen) - n_biased)]
        polarity = biased + [rest[k] for k in rng.permutation(len(rest))]
        for i, sc in zip(chosen, polarity):
            plan[int(i)] = sc
    return plan


def _chain(rng, pool: _EntityPool, m: int, used_tuples: set, fixed=None) -> list[str]:
    while True:
        ents = [pool.draw() for _ in range(m + 1)]
        if fixed:
            for pos, ent in fixed.items():
                ents[pos] = ent
        if tuple(ents) not in used_tuples:
            used_tuples.add(tuple(ents))
            return ents


def _hops(rng, entities, relations, label: str) -> tuple[list[str], list[int]]:
    """Gold chain sentences for ``label``; returns sentences and the link index of each."""
    m = len(relations)
    rels = list(relations)
    if label == "REFUTES":
        k = rng.integers(m)
        rels[k] = RELATIONS[rels[k]]
    links = list(range(m))
    if label == "NEI":
        links.pop(rng.integers(m))
    return [f"{entities[k]} {rels[k]} {entities[k + 1]}" for k in links], links


def _claim_relations(rng, m: int) -> list[str]:
    return [CLAIM_RELATIONS[rng.integers(len(CLAIM_RELATIONS))] for _ in range(m)]


def _single(rng, pool, used, cfg: GeneratorConfig, ident: str, label: str, sc_label: str | None):
    m = cfg.chain_length
    ents = _chain(rng, pool, m, used)
    rels = _claim_relations(rng, m)
    claim = _claim_text(ents, rels)
    gold, _ = _hops(rng, ents, rels, label)
    evidence = gold + _distractors(rng, pool, [ents], cfg.n_distractors)
    flags = [1] * len(gold) + [0] * cfg.n_distractors
    has_shortcut = sc_label is not None
    if has_shortcut:
        evidence.append(SHORTCUTS[sc_label])
        flags.append(0)
    order = rng.permutation(len(evidence))
    return GeneratedExample(
        id=ident,
        claim=claim,
        evidence=[evidence[i] for i in order],
        evidence_labels=[flags[i] for i in order],
        label=label,
        has_shortcut=has_shortcut,
        shortcut_agrees=bool(has_shortcut and sc_label == label),
        shortcut_label=sc_label,
        entities=tuple(ents),
    )


def _symmetric_pair(rng, pool, used, cfg: GeneratorConfig, ident: str):
    """Two parallel claims with opposite labels sharing one merged evidence pool."""
    m = cfg.chain_length
    first = ("SUPPORTS", "REFUTES")[rng.integers(2)]
    second = "REFUTES" if first == "SUPPORTS" else "SUPPORTS"
    ents_a = _chain(rng, pool, m, used)
    ents_b = _chain(rng, pool, m, used, fixed={0: ents_a[0], m: ents_a[m]})
    rels_a = _claim_relations(rng, m)
    rels_b = _claim_relations(rng, m)
    gold_a, _ = _hops(rng, ents_a, rels_a, first)
    gold_b, _ = _hops(rng, ents_b, rels_b, second)
    n_distract = min(cfg.n_distractors, 20 - 2 * m - 1)
    distract = _distractors(rng, pool, [ents_a, ents_b], n_distract)
    evidence = gold_a + gold_b + distract
    owner = ["a"] * len(gold_a) + ["b"] * len(gold_b) + [""] * len(distract)
    sc_label = None
    if rng.random() < cfg.shortcut_rate:
        sc_label = ("SUPPORTS", "REFUTES")[rng.integers(2)]
        evidence.append(SHORTCUTS[sc_label])
        owner.append("")
    order = rng.permutation(len(evidence))
    evidence = [evidence[i] for i in order]
    owner = [owner[i] for i in order]
    out = []
    for tag, ents, rels, label in (("a", ents_a, rels_a, first), ("b", ents_b, rels_b, second)):
        out.append(
            GeneratedExample(
                id=f"{ident}{tag}",
                claim=_claim_text(ents, rels),
                evidence=list(evidence),
                evidence_labels=[int(o == tag) for o in owner],
                label=label,
                has_shortcut=sc_label is not None,
                shortcut_agrees=sc_label == label,
                shortcut_label=sc_label,
                entities=tuple(ents),
            )
        )
    return out


def generate(config: GeneratorConfig) -> dict[str, list[GeneratedExample]]:
    """All five splits, deterministic in ``config.seed``.

    ``train``, ``dev`` and ``test_id`` share the biased shortcut
    distribution; ``test_adversarial`` flips the agreement; the symmetric
    split pairs opposite-label claims over shared evidence.
    """
    root = np.random.SeedSequence(config.seed)
    split_seeds = dict(zip(SPLITS, root.spawn(len(SPLITS))))
    pool_rng = np.random.default_rng(root.spawn(1)[0])
    pool = _EntityPool(pool_rng)
    used: set[tuple[str, ...]] = set()
    sizes = {
        "train": config.n_train,
        "dev": config.n_dev,
        "test_id": config.n_test,
        "test_adversarial": config.n_test,
    }
    labels = config.labels
    splits: dict[str, list[GeneratedExample]] = {}
    for name, size in sizes.items():
        rng = np.random.default_rng(split_seeds[name])
        gold = [labels[i % len(labels)] for i in range(size)]
        plan = _shortcut_plan(
            rng, gold, labels, config.shortcut_rate, config.bias_strength, name == "test_adversarial"
        )
        splits[name] = [
            _single(rng, pool, used, config, f"{name}-{i:05d}", gold[i], plan[i]) for i in range(size)
        ]
        order = rng.permutation(size)
        splits[name] = [splits[name][i] for i in order]
    rng = np.random.default_rng(split_seeds["test_symmetric"])
    sym: list[GeneratedExample] = []
    for i in range((config.n_test + 1) // 2):
        sym.extend(_symmetric_pair(rng, pool, used, config, f"test_symmetric-{i:05d}"))
    splits["test_symmetric"] = sym[: config.n_test]
    return splits


def phi_coefficient(a: Sequence[bool], b: Sequence[bool]) -> float:
    """Pearson correlation of two binary sequences (0 when either is constant)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


# ---------------------------------------------------------------- files


def write_split(examples: Iterable[GeneratedExample | dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = ex.to_record() if isinstance(ex, GeneratedExample) else ex
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_split(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
            missing = {"id", "claim", "evidence", "evidence_labels", "label"} - rec.keys()
            if missing:
                raise ValueError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            if len(rec["evidence"]) != len(rec["evidence_labels"]):
                raise ValueError(f"{path}:{lineno}: evidence and evidence_labels differ in length")
            records.append(rec)
    return records


def write_dataset(splits: dict[str, list[GeneratedExample]], directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, examples in splits.items():
        write_split(examples, directory / f"{name}.jsonl")


def read_dataset(directory: str | Path, names: Sequence[str] = SPLITS) -> dict[str, list[dict]]:
    directory = Path(directory)
    return {n: read_split(directory / f"{n}.jsonl") for n in names if (directory / f"{n}.jsonl").exists()}
