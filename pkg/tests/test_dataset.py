import numpy as np
import pytest

from fairrank.dataset import (
    CsvRoles,
    RankedDataset,
    ScoreAssignment,
    load_ranked_csv,
    roles_for,
    write_ranked_csv,
)
from fairrank.errors import ValidationError
from fairrank.synthetic import toy_dataset


def small(**kw):
    base = {
        "attribute_names": ("C", "Z"),
        "attribute_domains": {"C": ("0", "1"), "Z": ("a", "b")},
        "rows": (("0", "a"), ("1", "b"), ("1", "a")),
        "rank": (2, 1, 3),
        "protected_attribute": "C",
        "favorable_value": "1",
    }
    base.update(kw)
    return RankedDataset(**base)


def test_basic_accessors():
    d = small()
    assert d.n == 3
    assert d.unfavorable_value == "0"
    assert d.non_protected == ("Z",)
    assert d.codes("Z").tolist() == [0, 1, 0]
    assert d.order().tolist() == [1, 0, 2]


@pytest.mark.parametrize(
    "kw",
    [
        {"rank": (1, 1, 3)},
        {"rank": (1, 2)},
        {"favorable_value": "2"},
        {"attribute_domains": {"C": ("0", "1", "2"), "Z": ("a", "b")}},
        {"redlining_attributes": {"C"}},
        {"redlining_attributes": {"Q"}},
        {"rows": (("0", "a"), ("1", "x"), ("1", "a"))},
        {"protected_attribute": "Q"},
    ],
)
def test_validation_errors(kw):
    with pytest.raises(ValidationError):
        small(**kw)


def test_score_assignment_read_only_and_finite():
    s = ScoreAssignment(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        s.scores[0] = 5.0
    with pytest.raises(ValidationError):
        ScoreAssignment(np.array([1.0, np.nan]))


def test_csv_round_trip_with_scores(tmp_path):
    d = toy_dataset(2)
    scores = np.linspace(3.0, -1.0, d.n) + 1e-13
    path = tmp_path / "d.csv"
    write_ranked_csv(d, path, scores=scores)
    back, s = load_ranked_csv(path, roles_for(d), with_scores=True)
    assert back == d
    assert np.array_equal(s, scores)


def test_csv_inferred_domains_numeric_sort(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("C,Z,rank\n1,10,2\n0,9,1\n0,2,3\n", encoding="utf-8")
    d = load_ranked_csv(path, CsvRoles(protected="C", favorable="1"))
    assert d.attribute_domains["Z"] == ("2", "9", "10")
    assert d.rank == (2, 1, 3)
    _, s = load_ranked_csv(path, CsvRoles(protected="C", favorable="1"), with_scores=True)
    assert s is None


@pytest.mark.parametrize(
    "text",
    [
        "C,Z,rank\n1,a,1.5\n0,b,2\n",
        "C,Z,rank\n1,a,1\n0,b,1\n",
        "C,Z\n1,a\n0,b\n",
        "C,Z,rank\n1,a,1\n0,b\n",
        "",
    ],
)
def test_csv_errors(tmp_path, text):
    path = tmp_path / "bad.csv"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ValidationError):
        load_ranked_csv(path, CsvRoles(protected="C", favorable="1"))


def test_declared_domain_rejects_extra_values(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("C,Z,rank\n1,a,1\n0,b,2\n", encoding="utf-8")
    roles = CsvRoles(protected="C", favorable="1", domains={"Z": ["a"]})
    with pytest.raises(ValidationError):
        load_ranked_csv(path, roles)
