import numpy as np
import pytest

from segnn.evaluation import graph_statistics, resolved_trend, spearman_rho
from segnn.graphs import build_corpus, validate_schema
from segnn.ingest import (
    count_orphan_comments,
    parse_comments,
    parse_posts,
    parse_users,
    summarize_corpus,
)
from segnn.synthdata import generate_community


@pytest.fixture(scope="module")
def community(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    truth = generate_community(out, seed=42, n_questions=120, n_users=60)
    return out, truth


def test_generator_is_deterministic(tmp_path):
    t1 = generate_community(tmp_path / "a", seed=7, n_questions=30)
    t2 = generate_community(tmp_path / "b", seed=7, n_questions=30)
    assert t1 == t2
    assert (tmp_path / "a" / "Posts.xml").read_bytes() == (
        tmp_path / "b" / "Posts.xml"
    ).read_bytes()


def test_ingestion_recovers_generator_bookkeeping_exactly(community):
    out, truth = community
    posts = parse_posts(out / "Posts.xml")
    comments = parse_comments(out / "Comments.xml")
    users = parse_users(out / "Users.xml")
    assert posts.skipped == comments.skipped == users.skipped == 0
    summary = summarize_corpus(posts.records, comments.records, users.records)
    assert summary.n_questions == truth.n_questions
    assert summary.n_answers == truth.n_answers
    assert summary.n_comments == truth.n_comments
    assert summary.n_users == truth.n_users
    assert summary.pct_resolved == pytest.approx(truth.pct_resolved, abs=1e-12)
    assert summary.foundation_year == truth.foundation_year
    assert (
        count_orphan_comments(posts.records, comments.records)
        == truth.orphan_comments
    )


def test_built_graphs_are_schema_valid_and_match_counts(community):
    out, truth = community
    posts = parse_posts(out / "Posts.xml").records
    comments = parse_comments(out / "Comments.xml").records
    users = parse_users(out / "Users.xml").records
    graphs, report = build_corpus(posts, comments, users)
    assert report.graphs == truth.n_questions
    assert report.resolved == truth.resolved_questions
    assert report.counters.orphan_comments == truth.orphan_comments
    for g in graphs:
        assert validate_schema(g) == []
    # every answer and kept comment lands in some graph
    total_answers = sum(
        sum(1 for n in g.graph.nodes if n.label.value == "Answer") for g in graphs
    )
    assert total_answers == truth.n_answers
    stats = graph_statistics(graphs)
    assert stats.rows["nodes"].minimum >= 2


def test_planted_trend_is_decreasing(community):
    out, _ = community
    posts = parse_posts(out / "Posts.xml").records
    series = resolved_trend(posts)
    assert len(series) >= 8
    rho = spearman_rho([y for y, _ in series], [s for _, s in series])
    assert rho < 0


def test_parse_counts_match_line_oriented_row_count(community):
    # independent cross-check: count '<row ' occurrences without an XML parser
    out, _ = community
    for name, parse in (
        ("Posts.xml", parse_posts),
        ("Comments.xml", parse_comments),
        ("Users.xml", parse_users),
    ):
        raw = (out / name).read_text(encoding="utf-8")
        row_count = sum(line.count("<row ") for line in raw.splitlines())
        result = parse(out / name)
        assert len(result.records) + result.skipped == row_count


def test_per_year_truth_matches_trend(community):
    out, truth = community
    posts = parse_posts(out / "Posts.xml").records
    series = dict(resolved_trend(posts))
    for year, stats in truth.per_year.items():
        assert series[year] == pytest.approx(stats.share, abs=1e-12)
