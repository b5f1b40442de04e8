"""Stage execution: preprocess, map, plan, run, aggregate, report.

Artifacts live under the output directory::

    embeddings/<kind>.kgev      vector files (+ .json sidecar with the training config)
    embeddings/<kind>.hnsw      ANN index, only above the exact-search size limit
    mappings/entities.tsv       pooled dataset entities
    mappings/<chain>.tsv        mapping per mapper chain
    results/results.jsonl       one RunResult per plan entry, in plan order
    results/timings.jsonl       wall time per run (kept apart so results stay byte-stable)
    report/report.{csv,md}      aggregated table
    report/metadata.json        aggregation and protocol choices
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .ann import BRUTE_FORCE_LIMIT, HNSWIndex
from .config import SCENARIOS, Config, ConfigError
from .datasets import (
    CLASSIFICATION,
    CLUSTERING,
    REGRESSION,
    TASK_TYPES,
    EntityPool,
    TaskSpec,
    collect_entities,
    load_dataset,
    load_manifest,
    validate_manifest,
)
from .embedding import RDF2VEC, make_model
from .graph import KnowledgeGraph, load_graph
from .mapping import EntityMapping, build_chain
from .metrics import ScenarioMetrics
from .tasks import ml, semantic
from .tasks.common import FAILED, OK, SKIPPED, TaskRun, entity_lookup, params_key
from .vectors import EmbeddingSet, config_hash, load_vectors, save_vectors

logger = logging.getLogger(__name__)

LEVELS = ("params", "fold", "algorithm", "embedding", "dataset")
KEY_FIELDS = ("task_type", "dataset", "algorithm", "params", "fold", "embedding", "scenario")
SCENARIO_ORDER = tuple(SCENARIOS)
METRIC_ORDER = ("accuracy", "rmse", "ari", "nmi", "spearman", "pearson", "harmonic_mean", "kendall_tau", "f1")
SUPERVISED = (CLASSIFICATION, REGRESSION)


class PipelineError(RuntimeError):
    pass


# -- run records ----------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class RunKey:
    task_type: str
    dataset: str
    algorithm: str
    params: str
    fold: int
    embedding: str
    scenario: str

    def as_dict(self) -> dict[str, Any]:
        return {f: getattr(self, f) for f in KEY_FIELDS}

    @property
    def chain(self) -> str:
        return SCENARIOS[self.scenario][0]


@dataclass
class RunResult:
    key: RunKey
    status: str
    reason: str = ""
    metrics: tuple[ScenarioMetrics, ...] = ()
    coverage: float = 0.0
    wall_time: float = field(default=0.0, compare=False)

    def to_json(self) -> str:
        payload = {
            **self.key.as_dict(),
            "status": self.status,
            "reason": self.reason,
            "coverage": self.coverage,
            "metrics": [_clean(m.to_dict()) for m in self.metrics],
        }
        return json.dumps(payload, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> RunResult:
        d = json.loads(line)
        key = RunKey(**{f: d[f] for f in KEY_FIELDS})
        metrics = tuple(ScenarioMetrics.from_dict(_unclean(m)) for m in d["metrics"])
        return cls(key, d["status"], d["reason"], metrics, d["coverage"])


def _clean(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def _unclean(d: dict) -> dict:
    return {k: (float("nan") if v is None and k.startswith("value") else v) for k, v in d.items()}


# -- planning -------------------------------------------------------------------------


def algorithms_for(task_type: str, config: Config) -> list[str]:
    if task_type in ml.ALGORITHMS:
        default = list(ml.ALGORITHMS[task_type])
    else:
        default = [semantic.ALGORITHMS[task_type]]
    chosen = config.tasks.algorithms.get(task_type, default)
    unknown = [a for a in chosen if a not in default]
    if unknown:
        raise PipelineError(f"unknown algorithm(s) {unknown} for {task_type}; expected some of {default}")
    return list(chosen)


def grid_for(task_type: str, algorithm: str, config: Config) -> list[dict[str, Any]]:
    override = config.tasks.grids.get(task_type, {}).get(algorithm)
    if override is not None:
        if not override:
            raise PipelineError(f"empty hyperparameter grid for {task_type}/{algorithm}")
        return [dict(p) for p in override]
    if task_type in ml.ALGORITHMS:
        return ml.default_grid(task_type, algorithm)
    return [{}]


def folds_for(task_type: str, config: Config) -> int:
    return config.tasks.folds if task_type in SUPERVISED else 1


def plan_runs(config: Config, roster: Sequence[TaskSpec], scenarios: Sequence[str] | None = None) -> list[RunKey]:
    """Cartesian product tasks x algorithms x grid x embeddings x scenarios x folds, in that order."""
    scenarios = list(config.scenarios if scenarios is None else scenarios)
    kinds = [e.kind for e in config.embeddings]
    plan = []
    for task in roster:
        n_folds = folds_for(task.task_type, config)
        for algo in algorithms_for(task.task_type, config):
            for params in grid_for(task.task_type, algo, config):
                pk = params_key(params)
                for kind in kinds:
                    for scenario in scenarios:
                        for fold in range(n_folds):
                            plan.append(RunKey(task.task_type, task.dataset, algo, pk, fold, kind, scenario))
    if not plan:
        raise PipelineError("the run plan is empty")
    assert len(set(plan)) == len(plan), "duplicate run keys"
    return plan


# -- artifacts ------------------------------------------------------------------------


class Artifacts:
    """Lazily computed, cached stage outputs for one configuration."""

    def __init__(self, config: Config):
        self.config = config
        self.out = config.out
        self._graph: KnowledgeGraph | None = None
        self._embeddings: dict[str, EmbeddingSet] = {}
        self._indices: dict[str, Any] = {}
        self._mappings: dict[str, EntityMapping] = {}
        self._datasets: dict[tuple[str, str], Any] = {}
        self._pool: EntityPool | None = None
        self._manifest = None
        self._roster: list[TaskSpec] | None = None

    # KG
    @property
    def graph(self) -> KnowledgeGraph:
        if self._graph is None:
            kg = self.config.kg
            paths = [self.config.resolve(p) for p in kg.paths]
            self._graph, self.parse_stats = load_graph(paths, kg.label_predicates, kg.sameas_predicates, kg.strict)
            logger.info("loaded %r", self._graph)
        return self._graph

    # datasets
    @property
    def roster(self) -> list[TaskSpec]:
        if self._roster is None:
            self._manifest = load_manifest(self.config.resolve(self.config.manifest))
            self._roster = validate_manifest(self._manifest)
        return self._roster

    def dataset(self, task: TaskSpec):
        """The loaded dataset, or the exception that loading raised."""
        key = (task.task_type, task.dataset)
        if key not in self._datasets:
            try:
                self._datasets[key] = load_dataset(task.entry, self._manifest.base_dir)
            except Exception as exc:  # isolated per task; reported as failed runs
                logger.warning("cannot load %s/%s: %s", task.task_type, task.dataset, exc)
                self._datasets[key] = exc
        return self._datasets[key]

    @property
    def pool(self) -> EntityPool:
        if self._pool is None:
            loaded = [self.dataset(t) for t in self.roster]
            self._pool = collect_entities(d for d in loaded if not isinstance(d, Exception))
        return self._pool

    # embeddings
    def _embedding_params(self, kind: str) -> dict[str, Any]:
        spec = next(e for e in self.config.embeddings if e.kind == kind)
        params = {"random_state": self.config.seed, **spec.params}
        if kind != RDF2VEC:
            params["n_threads"] = 1 if self.config.deterministic else self.config.threads
        return params

    def _fingerprint(self, kind: str) -> str:
        return config_hash({"kind": kind, "params": self._embedding_params(kind), "kg": list(self.config.kg.paths)})

    def embedding(self, kind: str) -> EmbeddingSet:
        if kind not in self._embeddings:
            path = self.out / "embeddings" / f"{kind}.kgev"
            meta = path.with_suffix(".json")
            fp = self._fingerprint(kind)
            if path.exists() and meta.exists() and json.loads(meta.read_text())["fingerprint"] == fp:
                self._embeddings[kind] = load_vectors(path)
            else:
                t0 = time.perf_counter()
                model = make_model(kind, self._embedding_params(kind)).fit(self.graph)
                emb = model.to_embedding_set()
                path.parent.mkdir(parents=True, exist_ok=True)
                save_vectors(emb, path)
                meta.write_text(json.dumps({"fingerprint": fp, "kind": kind, "params": self._embedding_params(kind)},
                                           sort_keys=True, indent=1) + "\n")
                logger.info("trained %s in %.1fs", kind, time.perf_counter() - t0)
                self._embeddings[kind] = emb
        return self._embeddings[kind]

    def index(self, kind: str):
        """ANN index for analogy search, or ``"exact"`` for a full scan."""
        if kind not in self._indices:
            emb = self.embedding(kind)
            if len(emb) <= BRUTE_FORCE_LIMIT:
                self._indices[kind] = "exact"
            else:
                path = self.out / "embeddings" / f"{kind}.hnsw"
                if path.exists() and path.stat().st_mtime >= (self.out / "embeddings" / f"{kind}.kgev").stat().st_mtime:
                    self._indices[kind] = HNSWIndex.load(path)
                else:
                    ann = self.config.ann
                    index = HNSWIndex(ann.M, ann.ef_construction, "cosine", self.config.seed).fit(emb.vectors, emb.ids)
                    index.save(path)
                    self._indices[kind] = index
        return self._indices[kind]

    # mappings
    def mapping(self, chain: str) -> EntityMapping:
        if chain not in self._mappings:
            path = self.out / "mappings" / f"{chain}.tsv"
            meta = path.with_suffix(".json")
            fp = config_hash({"chain": self.config.chains[chain], "kg": list(self.config.kg.paths),
                              "pool": [[e.label, list(e.uris)] for e in self.pool]})
            if path.exists() and meta.exists() and json.loads(meta.read_text())["fingerprint"] == fp:
                self._mappings[chain] = EntityMapping.from_tsv(path, self.graph)
            else:
                mapping = build_chain(self.config.chains[chain]).fit(self.graph).transform(self.pool.as_dict())
                path.parent.mkdir(parents=True, exist_ok=True)
                self._write_pool()
                mapping.to_tsv(path, self.graph)
                meta.write_text(json.dumps({"fingerprint": fp}) + "\n")
                self._mappings[chain] = mapping
        return self._mappings[chain]

    def _write_pool(self) -> None:
        path = self.out / "mappings" / "entities.tsv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["dataset_id", "label", "uris"])
            for i, e in enumerate(self.pool):
                w.writerow([i, e.label, " ".join(e.uris)])

    def lookup(self, chain: str, kind: str):
        return entity_lookup(self.pool.entities, self.mapping(chain), self.embedding(kind))


def preprocess(artifacts: Artifacts) -> dict[str, EmbeddingSet]:
    out = {}
    for spec in artifacts.config.embeddings:
        out[spec.kind] = artifacts.embedding(spec.kind)
        artifacts.index(spec.kind)
    return out


def run_mapping(artifacts: Artifacts) -> dict[str, dict[str, float]]:
    ids = range(len(artifacts.pool))
    return {chain: artifacts.mapping(chain).coverage(ids) for chain in artifacts.config.chains}


# -- execution ------------------------------------------------------------------------


class ResultStore:
    """JSON-lines store of RunResults, appended per group, rewritten in plan order at the end."""

    def __init__(self, directory: Path):
        self.path = directory / "results.jsonl"
        self.timings = directory / "timings.jsonl"

    def load(self) -> dict[RunKey, RunResult]:
        done = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    try:
                        r = RunResult.from_json(line)
                    except (ValueError, KeyError, TypeError):
                        logger.warning("ignoring unreadable result line in %s", self.path)
                        continue
                    done[r.key] = r
        return done

    def append(self, results: Iterable[RunResult]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        results = list(results)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.writelines(r.to_json() + "\n" for r in results)
        with open(self.timings, "a", encoding="utf-8") as fh:
            fh.writelines(json.dumps({**r.key.as_dict(), "wall_time": r.wall_time}, sort_keys=True) + "\n" for r in results)

    def rewrite(self, results: Sequence[RunResult]) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text("".join(r.to_json() + "\n" for r in results), encoding="utf-8")
        tmp.replace(self.path)


def _group_key(key: RunKey) -> tuple:
    return (key.task_type, key.dataset, key.algorithm, key.embedding, key.chain)


def _run_group(artifacts: Artifacts, task: TaskSpec, algorithm: str, kind: str, chain: str) -> list[TaskRun]:
    cfg = artifacts.config
    ds = artifacts.dataset(task)
    if isinstance(ds, Exception):
        raise PipelineError(f"dataset failed to load: {ds}")
    emb = artifacts.embedding(kind)
    lookup = artifacts.lookup(chain, kind)
    grid = grid_for(task.task_type, algorithm, cfg)
    t = task.task_type
    if t in SUPERVISED:
        return ml.run_supervised_task(t, ds, emb, lookup, algorithm, grid, cfg.tasks.folds, cfg.seed)
    if t == CLUSTERING:
        return ml.run_clustering_task(ds, emb, lookup, algorithm, grid, cfg.seed)
    index = artifacts.index(kind) if t == "semantic_analogies" else None
    return semantic.run_semantic_task(t, ds, emb, lookup, cfg.seed, index, cfg.ann.ef_search)


def execute_plan(plan: Sequence[RunKey], artifacts: Artifacts) -> list[RunResult]:
    """One RunResult per plan entry; completed keys in the store are reused.

    Entries sharing (task, dataset, algorithm, embedding, mapper chain) are
    computed together: one cross-validation serves every hyperparameter,
    fold and scenario of that group. A failing group marks only its own
    entries as failed.
    """
    cfg = artifacts.config
    store = ResultStore(cfg.out / "results")
    done = store.load()
    tasks = {(t.task_type, t.dataset): t for t in artifacts.roster}
    groups: dict[tuple, list[RunKey]] = defaultdict(list)
    for key in plan:
        if key not in done:
            groups[_group_key(key)].append(key)
    if done:
        logger.info("resuming: %d of %d runs already complete", len(plan) - sum(map(len, groups.values())), len(plan))

    # artifacts are shared; build them up front so workers only read
    if groups:
        for chain in {g[4] for g in groups}:
            artifacts.mapping(chain)
        for kind in {g[3] for g in groups}:
            artifacts.embedding(kind)

    def work(gkey: tuple) -> list[RunResult]:
        task_type, dataset, algorithm, kind, chain = gkey
        keys = groups[gkey]
        t0 = time.perf_counter()
        try:
            runs = _run_group(artifacts, tasks[(task_type, dataset)], algorithm, kind, chain)
            by_slot = {(r.params_key, r.fold): r for r in runs}
            error = None
        except Exception as exc:  # isolate: one group failing never aborts the plan
            logger.warning("%s/%s/%s/%s/%s failed: %s", *gkey, exc)
            by_slot, error = {}, f"{type(exc).__name__}: {exc}"
        elapsed = (time.perf_counter() - t0) / max(len(keys), 1)
        out = []
        for key in keys:
            run = by_slot.get((key.params, key.fold))
            if run is None:
                out.append(RunResult(key, FAILED, error or "no result produced", (), 0.0, elapsed))
            else:
                metrics = run.metrics if run.status == OK else ()
                out.append(RunResult(key, run.status, run.reason, metrics, run.coverage, elapsed))
        return out

    workers = 1 if cfg.deterministic else cfg.threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # results are consumed in submission order; this thread is the only writer
        for batch in pool.map(work, list(groups)):
            store.append(batch)
            done.update((r.key, r) for r in batch)

    results = [done[k] for k in plan]
    store.rewrite(results)
    counts = Counter(r.status for r in results)
    logger.info("runs: %d ok, %d skipped, %d failed", counts[OK], counts[SKIPPED], counts[FAILED])
    return results


# -- aggregation ----------------------------------------------------------------------


ROW_FIELDS = ("task_type", "dataset", "algorithm", "params", "fold", "embedding", "metric", "scenario")


def result_rows(results: Iterable[RunResult]) -> list[dict[str, Any]]:
    """One row per (ok run, metric) with the scenario's value and weight 1; NaN values are dropped."""
    rows = []
    for r in results:
        if r.status != OK:
            continue
        accounting = SCENARIOS[r.key.scenario][1]
        for m in r.metrics:
            value = m.value_known if accounting == "known" else m.value_all
            if value is None or math.isnan(value):
                continue
            rows.append({**r.key.as_dict(), "metric": m.metric, "value": float(value), "n_runs": 1})
    return rows


def aggregate(rows: Iterable[dict[str, Any]], levels: Sequence[str] = LEVELS) -> list[dict[str, Any]]:
    """Collapse ``levels`` by run-count-weighted mean.

    RMSE rows keep their dataset: target scales differ between datasets.
    Rows may come from :func:`result_rows` or from an earlier aggregation.
    """
    unknown = set(levels) - set(LEVELS)
    if unknown:
        raise PipelineError(f"unknown aggregation level(s) {sorted(unknown)}")
    sums: dict[tuple, list[float]] = {}
    for row in rows:
        collapsed = set(levels)
        if row["metric"] == "rmse":
            collapsed.discard("dataset")
        key = tuple(None if f in collapsed else row[f] for f in ROW_FIELDS)
        acc = sums.setdefault(key, [0.0, 0])
        acc[0] += row["value"] * row["n_runs"]
        acc[1] += row["n_runs"]
    out = []
    for key, (total, n) in sums.items():
        if n == 0:
            logger.warning("aggregation group %s is empty; omitted", key)
            continue
        out.append({**dict(zip(ROW_FIELDS, key)), "value": total / n, "n_runs": n})
    return sorted(out, key=_row_order)


def _order(seq: Sequence[str], value) -> tuple:
    return (seq.index(value), "") if value in seq else (len(seq), str(value))


def _row_order(row: dict[str, Any]) -> tuple:
    def s(v):
        return "" if v is None else str(v)

    return (
        _order(TASK_TYPES, row["task_type"]),
        s(row["dataset"]),
        _order(METRIC_ORDER, row["metric"]),
        _order(SCENARIO_ORDER, row["scenario"]),
        s(row["algorithm"]),
        s(row["embedding"]),
        s(row["params"]),
        -1 if row["fold"] is None else row["fold"],
    )


# -- report ---------------------------------------------------------------------------


REPORT_COLUMNS = ("task_type", "dataset", "metric", "scenario", "value", "n_runs")


def _columns(table: Sequence[dict[str, Any]]) -> list[str]:
    extra = [f for f in ("algorithm", "embedding", "params", "fold") if any(r[f] is not None for r in table)]
    return ["task_type", "dataset", *extra, "metric", "scenario", "value", "n_runs"]


def _fmt(v, digits: int | None = None) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.{digits}f}" if digits is not None else repr(v)
    return str(v)


def report_csv(table: Sequence[dict[str, Any]]) -> str:
    cols = _columns(table)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in table:
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"  # noqa: E731
    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(header), sep, *(line(r) for r in rows)])


def report_markdown(table: Sequence[dict[str, Any]]) -> str:
    cols = _columns(table)
    long = _md_table(cols, [[_fmt(r[c], 3 if c == "value" else None) for c in cols] for r in table])
    # task type x metric matrix with one column per scenario
    scenarios = [s for s in SCENARIO_ORDER if any(r["scenario"] == s for r in table)]
    cells: dict[tuple, dict[str, str]] = {}
    for r in table:
        label = r["metric"] if not r["dataset"] else f"{r['metric']} ({r['dataset']})"
        cells.setdefault((r["task_type"], label), {})[r["scenario"]] = _fmt(r["value"], 3)
    pivot = _md_table(["task_type", "metric", *scenarios],
                      [[t, m, *(v.get(s, "") for s in scenarios)] for (t, m), v in cells.items()])
    return f"# Results\n\n{pivot}\n\n## All rows\n\n{long}\n"


def emit_report(table: Sequence[dict[str, Any]], out_dir: str | Path, metadata: dict[str, Any] | None = None,
                formats: Sequence[str] = ("csv", "md")) -> list[Path]:
    if not table:
        raise PipelineError("nothing to report: no successful runs")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineError(f"cannot create report directory {out_dir}: {exc.strerror}") from exc
    written = []
    render = {"csv": report_csv, "md": report_markdown}
    for fmt in formats:
        if fmt not in render:
            raise PipelineError(f"unknown report format {fmt!r}")
        path = out_dir / f"report.{fmt}"
        path.write_text(render[fmt](table), encoding="utf-8")
        written.append(path)
    if metadata is not None:
        path = out_dir / "metadata.json"
        path.write_text(json.dumps(metadata, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        written.append(path)
    return written


def report_metadata(config: Config, results: Sequence[RunResult], levels: Sequence[str]) -> dict[str, Any]:
    counts = Counter(r.status for r in results)
    return {
        "aggregation": {
            "levels_collapsed_in_order": list(levels),
            "weighting": "run count (equivalent to the mean over individual runs)",
            "rmse": "averaged within a dataset only",
        },
        "scenarios": {s: {"chain": c, "entities": a} for s, (c, a) in SCENARIOS.items() if s in config.scenarios},
        "chains": config.chains,
        "label_mapper": "every label of an entity is a candidate; the best token-sort similarity wins",
        "label_predicates": list(config.kg.label_predicates),
        "sameas_predicates": list(config.kg.sameas_predicates),
        "embeddings": [{"kind": e.kind, "params": e.params} for e in config.embeddings],
        "protocol": {
            "cv_folds": config.tasks.folds,
            "nmi_normalization": "arithmetic mean of entropies",
            "classification_unmapped": "counted as wrong",
            "regression_unmapped": "predict train-fold target mean",
            "clustering_unmapped": "own singleton cluster",
        },
        "seed": config.seed,
        "deterministic": config.deterministic,
        "runs": {"total": len(results), "ok": counts[OK], "skipped": counts[SKIPPED], "failed": counts[FAILED]},
    }


def make_report(config: Config, results: Sequence[RunResult], levels: Sequence[str] = LEVELS) -> list[Path]:
    table = aggregate(result_rows(results), levels)
    return emit_report(table, config.out / "report", report_metadata(config, results, levels))


def filter_roster(roster: Sequence[TaskSpec], spec: str | None) -> list[TaskSpec]:
    """Keep tasks matching a comma-separated list of ``task_type`` or ``task_type:dataset``."""
    if not spec:
        return list(roster)
    wanted = [s.strip() for s in spec.split(",") if s.strip()]
    for w in wanted:
        t = w.split(":", 1)[0]
        if t not in TASK_TYPES:
            raise ConfigError(f"stage filter: unknown task type {t!r}; expected one of {TASK_TYPES}")
    return [t for t in roster if any(w == t.task_type or w == f"{t.task_type}:{t.dataset}" for w in wanted)]


def run_all(config: Config, stage_filter: str | None = None) -> list[Path]:
    artifacts = Artifacts(config)
    roster = filter_roster(artifacts.roster, stage_filter)
    plan = plan_runs(config, roster)
    preprocess(artifacts)
    run_mapping(artifacts)
    results = execute_plan(plan, artifacts)
    return make_report(config, results)
