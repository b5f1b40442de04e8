from importlib.resources import files

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgeval.datasets import (
    CLASSIFICATION,
    REGRESSION,
    DatasetError,
    Manifest,
    ManifestEntry,
    collect_entities,
    load_dataset,
    load_docsim,
    load_manifest,
    load_ratings,
    load_relatedness,
    load_tabular,
    validate_manifest,
)
from kgeval.mapping import DatasetEntity


def write(path, rows):
    path.write_text("\n".join("\t".join(r) for r in rows) + "\n", encoding="utf-8")
    return path


def test_tabular_regression(tmp_path):
    p = write(tmp_path / "r.tsv", [
        ("label", "uri", "target"),
        ("Berlin", "http://dbpedia.org/resource/Berlin", "3.5"),
        ("Paris", "", "2"),
        ("Rome", "http://a http://b", "-1e3"),
    ])
    ds = load_tabular(p, REGRESSION)
    assert len(ds) == 3
    assert ds.targets == [3.5, 2.0, -1000.0]
    assert ds.entities[2].uris == ("http://a", "http://b")
    assert ds.entities[1] == DatasetEntity("Paris")


@pytest.mark.parametrize("bad, message", [("nan", "not finite"), ("x", "not a number"), ("", "missing target")])
def test_tabular_bad_target_names_file_and_line(tmp_path, bad, message):
    p = write(tmp_path / "r.tsv", [("label", "uris", "target"), ("A", "", "1"), ("B", "", bad)])
    with pytest.raises(DatasetError, match=message) as err:
        load_tabular(p, REGRESSION)
    assert f"{p}:3:" in str(err.value)


def test_missing_column(tmp_path):
    p = write(tmp_path / "c.tsv", [("label", "target"), ("A", "x")])
    with pytest.raises(DatasetError, match="missing column.*uris"):
        load_tabular(p, CLASSIFICATION)


def test_single_class_rejected(tmp_path):
    p = write(tmp_path / "c.tsv", [("label", "uris", "target"), ("A", "", "x"), ("B", "", "x")])
    with pytest.raises(DatasetError, match="two distinct"):
        load_tabular(p, CLASSIFICATION)


def test_relatedness_rank_violation(tmp_path):
    head = ("seed_label", "seed_uris", "candidate_label", "candidate_uris", "rank")
    p = write(tmp_path / "k.tsv", [head, ("S", "", "A", "", "1"), ("S", "", "B", "", "2"), ("S", "", "C", "", "2")])
    with pytest.raises(DatasetError, match="duplicate rank 2"):
        load_relatedness(p)
    p = write(tmp_path / "k.tsv", [head, ("S", "", "A", "", "2"), ("S", "", "B", "", "1"), ("T", "", "C", "", "1")])
    ds = load_relatedness(p)
    assert [(s.label, [c.label for c in cs]) for s, cs in ds.seeds] == [("S", ["B", "A"]), ("T", ["C"])]


def test_ratings_threshold_drops_single_rating_users(tmp_path, caplog):
    p = write(tmp_path / "m.tsv", [
        ("user_id", "label", "uris", "rating"),
        ("u1", "Alien", "", "5"), ("u1", "Heat", "", "4"), ("u1", "Up", "", "2"),
        ("u2", "Alien", "", "4.5"), ("u2", "Up", "", "1"),
    ])
    ds = load_ratings(p, 4.0)
    assert ds.dropped_users == 1
    assert set(ds.by_user()) == {"u1"}
    assert [i.label for i in ds.by_user()["u1"]] == ["Alien", "Heat"]
    assert "dropped 1 user" in caplog.text


def test_docsim_unknown_document(tmp_path):
    ann = write(tmp_path / "a.tsv", [("doc_id", "label", "uris"), ("d1", "Berlin", ""), ("d2", "Paris", "")])
    gold = write(tmp_path / "g.tsv", [("doc_a", "doc_b", "score"), ("d1", "d2", "0.5"), ("d1", "d9", "1")])
    with pytest.raises(DatasetError, match="'d9'") as err:
        load_docsim(ann, gold)
    assert ":3:" in str(err.value)


def test_collect_entities_examples():
    berlin = DatasetEntity("Berlin", ("http://dbpedia.org/resource/Berlin",))
    a = [berlin, DatasetEntity("Paris")]
    b = [DatasetEntity("Berlin", ("http://dbpedia.org/resource/Berlin",)), DatasetEntity("Berlin", ("http://x/B",))]

    class DS:
        def __init__(self, ents):
            self.ents = ents

        def iter_entities(self):
            return iter(self.ents)

    pool = collect_entities([DS(a), DS(b)])
    assert len(pool) == 3
    assert pool.id_of(berlin) == 0 and pool.id_of(DatasetEntity("Berlin", ("http://x/B",))) == 2
    assert len(collect_entities([])) == 0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.tuples(st.sampled_from("abcd"), st.sets(st.sampled_from("xyz"), max_size=2)), max_size=8), max_size=4))
def test_pool_size_bounded_and_ids_stable(raw):
    class DS:
        def __init__(self, ents):
            self.ents = ents

        def iter_entities(self):
            return iter(self.ents)

    datasets = [DS([DatasetEntity(l, tuple(u)) for l, u in ents]) for ents in raw]
    pool = collect_entities(datasets)
    assert len(pool) <= sum(len(d.ents) for d in datasets)
    distinct = {e.key for d in datasets for e in d.ents}
    assert len(pool) == len(distinct)
    assert [e.key for e in collect_entities(datasets)] == [e.key for e in pool]


def test_benchmark_manifest_has_26_tasks():
    manifest = load_manifest(files("kgeval") / "fixtures" / "benchmark_manifest.yaml")
    roster = validate_manifest(manifest)
    assert len(roster) == 26
    counts = {}
    for t in roster:
        counts[t.task_type] = counts.get(t.task_type, 0) + 1
    assert list(counts.values()) == [7, 5, 5, 1, 1, 4, 3]


def test_manifest_errors(caplog):
    assert validate_manifest(Manifest()) == []
    assert "no tasks" in caplog.text
    dup = Manifest(datasets=[ManifestEntry(name="Cities", task_type="classification", path="a")] * 2)
    with pytest.raises(DatasetError, match="duplicate"):
        validate_manifest(dup)
    with pytest.raises(DatasetError, match="unknown task type"):
        validate_manifest(Manifest(datasets=[ManifestEntry(name="X", task_type="qa", path="a")]))


def test_manifest_rejects_unknown_keys(tmp_path):
    p = tmp_path / "m.yaml"
    p.write_text("datasets:\n  - name: A\n    task_type: regression\n    path: a.tsv\n    colour: red\n")
    with pytest.raises(DatasetError, match="colour"):
        load_manifest(p)


def test_load_dataset_resolves_relative_paths(tmp_path):
    write(tmp_path / "c.tsv", [("label", "uris", "target"), ("A", "", "x"), ("B", "", "y")])
    entry = ManifestEntry(name="C", task_type="classification", path="c.tsv")
    ds = load_dataset(entry, tmp_path)
    assert ds.name == "C" and ds.targets == ["x", "y"]
    with pytest.raises(DatasetError, match="cannot open"):
        load_dataset(entry, tmp_path / "nowhere")
