"""Small synthetic graphs used by the test suite and the bundled fixtures."""

from __future__ import annotations

import numpy as np

from .graph import KnowledgeGraph


def graph_from_ids(triples, n_entities: int | None = None, n_relations: int | None = None,
                   prefix: str = "http://example.org/") -> KnowledgeGraph:
    """Graph whose entity ``i`` has IRI ``{prefix}e{i}`` and relation ``r`` ``{prefix}r{r}``."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if n_entities is None:
        n_entities = int(max(triples[:, 0].max(), triples[:, 2].max())) + 1 if len(triples) else 0
    if n_relations is None:
        n_relations = int(triples[:, 1].max()) + 1 if len(triples) else 0
    return KnowledgeGraph(
        [f"{prefix}e{i}" for i in range(n_entities)],
        [f"{prefix}r{r}" for r in range(n_relations)],
        triples,
        {},
        {},
    )


def chain_graph(n: int) -> KnowledgeGraph:
    return graph_from_ids([(i, 0, i + 1) for i in range(n - 1)], n, 1)


def planted_clusters(n_clusters: int, size: int, groups: int, extra: int, seed: int = 0):
    """Disjoint clusters with a learnable relational structure.

    Each cluster is cut into ``groups`` equal groups; a cluster-specific
    relation links every member of group ``g`` to every member of group
    ``g + 1``. A shared relation adds ``extra`` random intra-cluster edges per
    cluster. Returns ``(graph, cluster_of_entity)``.
    """
    if size % groups:
        raise ValueError("cluster size must be a multiple of the group count")
    rng = np.random.default_rng(seed)
    g = size // groups
    shared = n_clusters
    rows = []
    for c in range(n_clusters):
        base = c * size
        for k in range(groups - 1):
            heads = base + k * g + np.arange(g)
            tails = base + (k + 1) * g + np.arange(g)
            hh, tt = np.meshgrid(heads, tails, indexing="ij")
            rows.append(np.stack([hh.ravel(), np.full(hh.size, c), tt.ravel()], axis=1))
        h = base + rng.integers(0, size, extra)
        t = base + rng.integers(0, size, extra)
        keep = h != t
        rows.append(np.stack([h[keep], np.full(keep.sum(), shared), t[keep]], axis=1))
    triples = np.unique(np.concatenate(rows), axis=0)
    labels = np.repeat(np.arange(n_clusters), size)
    return graph_from_ids(triples, n_clusters * size, n_clusters + 1), labels


# -- bundled miniature fixtures ---------------------------------------------------------

KG_PREFIX = "http://example.org/kg/"
DBPEDIA_PREFIX = "http://dbpedia.org/resource/"
_SYLLABLES = ("ka", "lo", "mi", "ren", "tu", "sa", "vor", "ne", "di", "ul", "bra", "osk", "fen", "ti", "gar", "wel")
_THEMES = ("river", "mountain", "forest", "desert")
# share of dataset references by how they reach the KG: by IRI, by a same-as IRI,
# by exact label, by a misspelt label (recall chain only) and not at all
_REFERENCE_MODES = (("iri", 0.3), ("sameas", 0.15), ("label", 0.3), ("typo", 0.15), ("missing", 0.1))


def _mini_labels(n: int, rng: np.random.Generator) -> list[str]:
    seen, out = set(), []
    while len(out) < n:
        words = []
        for _ in range(2):
            k = int(rng.integers(2, 4))
            words.append("".join(rng.choice(_SYLLABLES, k)).capitalize())
        label = " ".join(words)
        key = " ".join(sorted(label.lower().split()))
        if key not in seen:
            seen.add(key)
            out.append(label)
    return out


def _typo(label: str, rng: np.random.Generator) -> str:
    words = label.split()
    i = max(range(len(words)), key=lambda j: len(words[j]))
    w = words[i]
    pos = int(rng.integers(1, len(w)))
    words[i] = w[:pos] + w[pos + 1:]
    return " ".join(words)


def _nt_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


class _MiniWorld:
    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)
        self.n_clusters, self.size, self.groups = 4, 40, 4
        self.graph, self.cluster = planted_clusters(self.n_clusters, self.size, self.groups, extra=120, seed=seed)
        self.labels = _mini_labels(self.graph.n_entities, self.rng)
        self.sameas = {i for i in range(self.graph.n_entities) if i % 3 == 0}
        modes, probs = zip(*_REFERENCE_MODES)
        self.mode = [str(m) for m in self.rng.choice(modes, self.graph.n_entities, p=probs)]
        self.typos = {i: _typo(self.labels[i], self.rng) for i, m in enumerate(self.mode) if m == "typo"}

    def iri(self, i: int) -> str:
        return f"{KG_PREFIX}e{i}"

    def dbpedia(self, i: int) -> str:
        return DBPEDIA_PREFIX + self.labels[i].replace(" ", "_")

    def ref(self, i: int) -> tuple[str, str]:
        """(label, uris) as a dataset would reference entity ``i``."""
        mode = self.mode[i]
        if mode == "sameas" and i not in self.sameas:
            mode = "label"
        if mode == "iri":
            return self.labels[i], self.iri(i)
        if mode == "sameas":
            return self.labels[i], self.dbpedia(i)
        if mode == "typo":
            return self.typos[i], ""
        if mode == "missing":
            return f"Unlisted Place {i}", ""
        return self.labels[i], ""

    def pick(self, cluster: int, n: int, group: int | None = None) -> list[int]:
        base = cluster * self.size
        if group is None:
            pool = np.arange(base, base + self.size)
        else:
            g = self.size // self.groups
            pool = np.arange(base + group * g, base + (group + 1) * g)
        return sorted(int(x) for x in self.rng.choice(pool, n, replace=False))

    def ntriples(self) -> str:
        g = self.graph
        lines = []
        for h, r, t in g.triples:
            lines.append(f"<{self.iri(h)}> <{KG_PREFIX}r{r}> <{self.iri(t)}> .")
        for i, label in enumerate(self.labels):
            lines.append(f'<{self.iri(i)}> <http://www.w3.org/2000/01/rdf-schema#label> "{_nt_escape(label)}"@en .')
            if i in self.sameas:
                lines.append(f"<{self.iri(i)}> <http://www.w3.org/2002/07/owl#sameAs> <{self.dbpedia(i)}> .")
        return "\n".join(lines) + "\n"


def _tsv(rows) -> str:
    return "".join("\t".join(str(c) for c in row) + "\n" for row in rows)


def write_mini_fixtures(out_dir, seed: int = 0) -> dict[str, str]:
    """Write a small KG, one dataset per task type, a manifest and a config.

    Every dataset uses at most 50 distinct entities. Returns relative paths by role.
    """
    from pathlib import Path

    out = Path(out_dir)
    (out / "data").mkdir(parents=True, exist_ok=True)
    w = _MiniWorld(seed)
    rng = w.rng
    C = w.n_clusters
    files = {}

    def put(name: str, text: str) -> str:
        (out / name).write_text(text, encoding="utf-8")
        files[name] = name
        return name

    put("kg.nt", w.ntriples())

    tabular = [i for c in range(C) for i in w.pick(c, 10)]
    head = [("label", "uris", "target")]
    put("data/classification.tsv", _tsv(head + [(*w.ref(i), _THEMES[w.cluster[i]]) for i in tabular]))
    g = w.size // w.groups
    reg = [(*w.ref(i), f"{10.0 * w.cluster[i] + (i % w.size) // g + rng.normal(0, 0.5):.3f}") for i in tabular]
    put("data/regression.tsv", _tsv(head + reg))
    put("data/clustering.tsv", _tsv(head + [(*w.ref(i), int(w.cluster[i])) for i in tabular]))

    # documents: four entities each, three from a main theme and one stray
    docs, ann = [], [("doc_id", "label", "uris")]
    for d in range(10):
        main = d % C
        members = w.pick(main, 3) + w.pick((main + 1 + d) % C, 1)
        docs.append((f"d{d}", main))
        ann += [(f"d{d}", *w.ref(i)) for i in members]
    gold = [("doc_a", "doc_b", "score")]
    for a in range(len(docs)):
        for b in range(a + 1, len(docs)):
            same = docs[a][1] == docs[b][1]
            gold.append((docs[a][0], docs[b][0], f"{(3.5 if same else 1.5) + rng.normal(0, 0.5):.2f}"))
    put("data/docsim_annotations.tsv", _tsv(ann))
    put("data/docsim_gold.tsv", _tsv(gold))

    rel = [("seed_label", "seed_uris", "candidate_label", "candidate_uris", "rank")]
    for c in range(C):
        seed_e, *near = w.pick(c, 6)
        far = [w.pick(o, 1)[0] for o in range(C) if o != c]
        for rank, cand in enumerate(near + far, start=1):
            rel.append((*w.ref(seed_e), *w.ref(cand), rank))
    put("data/relatedness.tsv", _tsv(rel))

    # a : b :: c : d with a -> b and c -> d along cluster-specific group links
    quads = [tuple(f"{x}_{p}" for x in "abcd" for p in ("label", "uris"))]
    for q in range(12):
        c1, c2 = q % C, (q + 1) % C
        grp = q % (w.groups - 1)
        a, c = w.pick(c1, 1, grp)[0], w.pick(c2, 1, grp)[0]
        b, d = w.pick(c1, 1, grp + 1)[0], w.pick(c2, 1, grp + 1)[0]
        quads.append(tuple(x for e in (a, b, c, d) for x in w.ref(e)))
    put("data/analogies.tsv", _tsv(quads))

    items = [i for c in range(C) for i in w.pick(c, 10)]
    by_cluster = {c: [i for i in items if w.cluster[i] == c] for c in range(C)}
    ratings = [("user_id", "label", "uris", "rating")]
    for u in range(8):
        fav = u % C
        liked = rng.choice(by_cluster[fav], 6, replace=False)
        others = rng.choice([i for i in items if w.cluster[i] != fav], 3, replace=False)
        ratings += [(f"u{u}", *w.ref(int(i)), 5) for i in liked]
        ratings += [(f"u{u}", *w.ref(int(i)), 2) for i in others]
    ratings.append(("u8", *w.ref(items[0]), 5))  # single positive: dropped on load
    put("data/ratings.tsv", _tsv(ratings))

    manifest = """\
datasets:
  - {name: mini-classification, task_type: classification, path: data/classification.tsv}
  - {name: mini-regression, task_type: regression, path: data/regression.tsv}
  - {name: mini-clustering, task_type: clustering, path: data/clustering.tsv, n_clusters: 4}
  - {name: mini-docsim, task_type: document_similarity, path: data/docsim_annotations.tsv, gold: data/docsim_gold.tsv}
  - {name: mini-relatedness, task_type: entity_relatedness, path: data/relatedness.tsv}
  - {name: mini-analogies, task_type: semantic_analogies, path: data/analogies.tsv}
  - {name: mini-ratings, task_type: recommendation, path: data/ratings.tsv, threshold: 4.0, k: 3}
"""
    put("manifest.yaml", manifest)
    config = """\
kg:
  paths: [kg.nt]
embeddings:
  - kind: TransE
    params: {dim: 16, epochs: 30, negatives: 4, batch_size: 256, learning_rate: 0.05}
  - kind: RDF2vec
    params: {dim: 16, walks_per_entity: 10, depth: 2, epochs: 3}
chains:
  precision: [uri, {label: 1.0}]
  recall: [uri, {label: 0.7}]
manifest: manifest.yaml
tasks:
  folds: 5
seed: 0
output_dir: out
"""
    put("config.yaml", config)
    return files
