import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morphlex.dictionary import (
    DictEntry,
    DictionaryError,
    InflectionStats,
    build_lemma_pairs,
    inflect_pairs,
    leakage_report,
    load_synsets,
    paradigm_coverage,
    read_dictionary,
    split_dictionary,
    split_sizes,
    write_split,
)
from morphlex.morphology import SUBSET, MorphTag, Paradigm, ParadigmCollection, parse_tag, shared_feature_inventory

T = parse_tag


def paradigms(*items):
    return ParadigmCollection(Paradigm(lemma, {T(tag): form for tag, form in slots.items()}) for lemma, slots in items)


def entries_for(lemmas, forms_per_lemma=2):
    return [DictEntry(f"{lem}{k}", f"t{lem}{k}", lem, f"t{lem}", MorphTag.of("N", f"C{k}"))
            for lem in lemmas for k in range(forms_per_lemma)]


class TestLemmaPairs:
    def test_product(self):
        assert build_lemma_pairs({"s1": ["a", "b"]}, {"s1": ["x"]}) == [("a", "x"), ("b", "x")]

    def test_dedup_across_synsets(self):
        assert build_lemma_pairs({"s1": ["a"], "s2": ["a"]}, {"s1": ["x"], "s2": ["x"]}) == [("a", "x")]

    def test_disjoint(self):
        assert build_lemma_pairs({"s1": ["a"]}, {"s2": ["x"]}) == []

    def test_synset_file(self, tmp_path):
        path = tmp_path / "syn.tsv"
        path.write_text("s1\ta\ns1\tb\ns2\tc\ns1\ta\n", encoding="utf-8")
        assert load_synsets(path) == {"s1": ["a", "b"], "s2": ["c"]}
        path.write_text("s1\n")
        with pytest.raises(DictionaryError, match=":1:"):
            load_synsets(path)


class TestInflect:
    def test_morze_more(self):
        pl = paradigms(("morze", {"N;NOM;PL": "morza", "N;NOM;SG": "morze"}))
        cs = paradigms(("moře", {"N;NOM;PL": "moře", "N;GEN;SG": "moře"}))
        assert inflect_pairs([("morze", "moře")], pl, cs) == [
            DictEntry("morza", "moře", "morze", "moře", MorphTag.of("N", "NOM", "PL"))
        ]

    def test_disjoint_tags(self):
        a = paradigms(("a", {"N;SG": "a"}))
        b = paradigms(("b", {"V;PST": "b"}))
        assert inflect_pairs([("a", "b")], a, b) == []

    def test_two_pairs_three_slots(self):
        slots = ["N;NOM;SG", "N;NOM;PL", "N;GEN;SG"]
        src = paradigms(*[(lem, {s: f"{lem}{i}" for i, s in enumerate(slots)}) for lem in ("a", "b")])
        tgt = paradigms(*[(lem, {s: f"{lem}{i}" for i, s in enumerate(slots)}) for lem in ("x", "y")])
        assert len(inflect_pairs([("a", "x"), ("b", "y")], src, tgt)) == 6

    def test_missing_lemma_counted(self):
        stats = InflectionStats()
        src = paradigms(("a", {"N;SG": "a"}))
        assert inflect_pairs([("a", "x"), ("q", "x")], src, paradigms(), stats=stats) == []
        assert (stats.missing_src, stats.missing_tgt) == (1, 2)

    def test_subset_stores_shared_features(self):
        src = paradigms(("morze", {"N;DAT;SG": "morzu"}))
        tgt = paradigms(("mar", {"N;SG": "mar", "N;PL": "mares"}))
        shared = shared_feature_inventory(src, tgt)
        out = inflect_pairs([("morze", "mar")], src, tgt, mode=SUBSET, shared_features=shared)
        assert out == [DictEntry("morzu", "mar", "morze", "mar", MorphTag.of("N", "SG"))]

    def test_entries_belong_to_paradigms(self):
        slots = {"V;PRS;1;SG": "1", "V;PRS;3;PL": "3", "V;PST;3;SG": "p"}
        src = paradigms(("perdre", {k: "perd" + v for k, v in slots.items()}))
        tgt = paradigms(("lose", {k: "lose" + v for k, v in slots.items()}))
        for e in inflect_pairs([("perdre", "lose")], src, tgt):
            assert src[e.src_lemma].slots[e.tag] == e.src_form
            assert tgt[e.tgt_lemma].slots[e.tag] == e.tgt_form


class TestSplit:
    @pytest.mark.parametrize("n, sizes", [(10, (6, 2, 2)), (5, (3, 1, 1)), (3, (1, 1, 1)), (200, (120, 40, 40))])
    def test_sizes(self, n, sizes):
        assert split_sizes(n) == sizes
        split = split_dictionary(entries_for([f"l{i:03d}" for i in range(n)]), 0)
        assert tuple(len(split.lemmas[k]) for k in ("train", "dev", "test")) == sizes

    def test_deterministic(self):
        e = entries_for([f"l{i}" for i in range(20)])
        assert split_dictionary(e, 7) == split_dictionary(e, 7)
        assert split_dictionary(e, 7).lemmas != split_dictionary(e, 8).lemmas

    def test_input_order_irrelevant(self):
        e = entries_for([f"l{i}" for i in range(20)])
        assert split_dictionary(e, 3).lemmas == split_dictionary(e[::-1], 3).lemmas

    def test_too_few_lemmata(self):
        with pytest.raises(DictionaryError, match="at least 3"):
            split_dictionary(entries_for(["a", "b"]), 0)
        with pytest.raises(DictionaryError):
            split_dictionary([], 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 60), st.integers(0, 2**32 - 1))
    def test_disjoint_and_complete(self, n, seed):
        lemmas = [f"l{i}" for i in range(n)]
        e = entries_for(lemmas)
        split = split_dictionary(e, seed)
        sets = [set(split.lemmas[k]) for k in ("train", "dev", "test")]
        assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
        assert set().union(*sets) == set(lemmas)
        for name, s in zip(("train", "dev", "test"), sets):
            assert all(x.src_lemma in s for x in getattr(split, name))
        assert len(split.train) + len(split.dev) + len(split.test) == len(e)
        assert leakage_report(split.train, split.test).leaked == 0

    def test_write_split(self, tmp_path):
        split = split_dictionary(entries_for([f"l{i}" for i in range(10)]), 1)
        paths = write_split(split, tmp_path)
        assert read_dictionary(paths["train"]) == split.train
        meta = json.loads((tmp_path / "split.json").read_text())
        assert meta["split_seed"] == 1
        assert meta["lemmas"] == {"train": 6, "dev": 2, "test": 2}


class TestLeakage:
    def test_perdent(self):
        tag = T("V;IND;PRS;3;PL")
        train = [DictEntry("perdre", "lose", "perdre", "lose", T("V;NFIN"))]
        test = [DictEntry("perdent", "lose", "perdre", "lose", tag), DictEntry("chat", "cat", "chat", "cat", T("N;SG"))]
        r = leakage_report(train, test)
        assert r.leaked == 1 and r.total == 2

    def test_distinct_forms_counted_once(self):
        train = [DictEntry("a", "x", "A", "X", T("N"))]
        test = [DictEntry("a1", "x", "A", "X", T("N;SG")), DictEntry("a1", "y", "A", "Y", T("N;SG"))]
        assert leakage_report(train, test) == (1, 1, 1.0)

    def test_empty_test(self):
        assert leakage_report([], []).fraction == 0.0


class TestCoverage:
    slots = {"N;NOM;SG": "0", "N;NOM;PL": "1", "N;GEN;SG": "2", "N;GEN;PL": "3"}
    par = paradigms(("a", {k: "a" + v for k, v in slots.items()}), ("b", {k: "b" + v for k, v in slots.items()}))

    def entries(self, lemma, tags):
        return [DictEntry(self.par[lemma].slots[T(t)], "x", lemma, "x", T(t)) for t in tags]

    def test_full(self):
        assert paradigm_coverage(self.entries("a", self.slots), self.par) == {"N": 1.0}

    def test_quarter(self):
        assert paradigm_coverage(self.entries("b", ["N;NOM;SG"]), self.par) == {"N": 0.25}

    def test_mixed(self):
        e = self.entries("a", self.slots) + self.entries("b", ["N;NOM;SG"])
        assert paradigm_coverage(e, self.par) == {"N": pytest.approx(0.625)}
