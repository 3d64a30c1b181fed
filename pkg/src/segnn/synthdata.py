"""Seeded synthetic community generator.

Emits Posts/Comments/Users XML in the dump row format along with its own
bookkeeping, so ingestion and graph building can be checked against exact
expected values without a real dump snapshot. The planted structure gives
graph models something to find: resolved questions attract more answers, the
resolved share decays over the years, and question texts carry a weak topic
signal so content-only baselines stay above chance but below the GNNs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import quoteattr

import numpy as np

_TOPIC_WORDS = (
    "parser compiler automaton lambda proof graph entropy kernel regression "
    "cluster gradient tensor query index shard cache protocol socket thread "
    "mutex heap stack queue trie hash prime modulus matrix eigenvalue"
).split()

_RESOLVED_HINTS = "simple known classic textbook standard documented".split()
_UNRESOLVED_HINTS = "obscure niche unclear ambiguous speculative esoteric".split()

_ABOUT_SNIPPETS = (
    "writes code for fun",
    "lurker since the beta",
    "interested in <b>theory</b> &amp; practice",
    "",
)


@dataclass
class YearStats:
    questions: int = 0
    resolved: int = 0

    @property
    def share(self) -> float:
        return self.resolved / self.questions if self.questions else 0.0


@dataclass
class GroundTruth:
    n_questions: int = 0
    n_answers: int = 0
    n_comments: int = 0
    n_users: int = 0
    n_other_posts: int = 0
    resolved_questions: int = 0
    orphan_comments: int = 0
    foundation_year: int = 0
    per_year: dict = field(default_factory=dict)

    @property
    def pct_resolved(self) -> float:
        return self.resolved_questions / self.n_questions

    @property
    def majority_ratio(self) -> float:
        """Share of the larger class; positive class is unresolved."""
        return max(self.pct_resolved, 1.0 - self.pct_resolved)


def _date(rng, year: int) -> str:
    month = int(rng.integers(1, 13))
    day = int(rng.integers(1, 28))
    hour = int(rng.integers(0, 24))
    minute = int(rng.integers(0, 60))
    second = int(rng.integers(0, 60))
    milli = int(rng.integers(0, 1000))
    return f"{year:04d}-{month:02d}-{day:02d}T{hour:02d}:{minute:02d}:{second:02d}.{milli:03d}"


def _words(rng, pool, n) -> str:
    return " ".join(rng.choice(pool, size=n))


def _question_text(rng, resolved: bool, signal: float) -> tuple[str, str]:
    title = _words(rng, _TOPIC_WORDS, 5)
    body_words = _words(rng, _TOPIC_WORDS, int(rng.integers(8, 25)))
    if rng.random() < signal:
        hints = _RESOLVED_HINTS if resolved else _UNRESOLVED_HINTS
        body_words += " " + _words(rng, hints, 3)
        title += " " + str(rng.choice(hints))
    body = f"<p>{body_words}</p><pre><code>x = {int(rng.integers(0, 99))}</code></pre>"
    return title, body


def _row(fh, attrs: dict):
    parts = " ".join(f"{k}={quoteattr(str(v))}" for k, v in attrs.items())
    fh.write(f"  <row {parts} />\n")


def generate_community(
    out_dir,
    seed: int = 0,
    n_questions: int = 300,
    n_users: int = 150,
    start_year: int = 2010,
    end_year: int = 2021,
    text_signal: float = 0.35,
    n_orphan_comments: int = 2,
    n_other_posts: int = 2,
) -> GroundTruth:
    """Write Posts.xml / Comments.xml / Users.xml under out_dir; returns the
    generator's own bookkeeping for exact-count assertions."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    truth = GroundTruth(foundation_year=start_year)

    years = list(range(start_year, end_year + 1))
    base_rate = np.linspace(0.78, 0.30, len(years))

    user_ids = list(range(1, n_users + 1))
    truth.n_users = n_users

    post_id = 0
    comment_id = 0
    posts_rows = []
    comments_rows = []

    def next_post_id():
        nonlocal post_id
        post_id += 1
        return post_id

    def next_comment_id():
        nonlocal comment_id
        comment_id += 1
        return comment_id

    def maybe_user():
        if rng.random() < 0.03:
            return None
        return int(rng.choice(user_ids))

    def add_comment(target_post_id: int, year: int):
        uid = maybe_user()
        attrs = {
            "Id": next_comment_id(),
            "PostId": target_post_id,
            "Text": _words(rng, _TOPIC_WORDS, int(rng.integers(3, 10))),
            "CreationDate": _date(rng, year),
        }
        if uid is not None:
            attrs["UserId"] = uid
        comments_rows.append(attrs)
        truth.n_comments += 1

    for k in range(n_questions):
        # first question pinned to the foundation year so it is always present
        year = start_year if k == 0 else int(rng.choice(years))
        stats = truth.per_year.setdefault(year, YearStats())
        resolved = bool(rng.random() < base_rate[year - start_year])
        n_answers = (
            1 + int(rng.poisson(1.2)) if resolved else int(rng.poisson(0.7))
        )
        qid = next_post_id()
        answer_ids = [next_post_id() for _ in range(n_answers)]
        title, body = _question_text(rng, resolved, text_signal)
        q_attrs = {
            "Id": qid,
            "PostTypeId": 1,
            "CreationDate": _date(rng, year),
            "Title": title,
            "Body": body,
            "Tags": f"<{rng.choice(_TOPIC_WORDS)}><{rng.choice(_TOPIC_WORDS)}>",
        }
        owner = maybe_user()
        if owner is not None:
            q_attrs["OwnerUserId"] = owner
        if resolved:
            q_attrs["AcceptedAnswerId"] = int(rng.choice(answer_ids))
            truth.resolved_questions += 1
            stats.resolved += 1
        posts_rows.append(q_attrs)
        truth.n_questions += 1
        stats.questions += 1

        for aid in answer_ids:
            a_attrs = {
                "Id": aid,
                "PostTypeId": 2,
                "ParentId": qid,
                "CreationDate": _date(rng, year),
                "Body": f"<p>{_words(rng, _TOPIC_WORDS, int(rng.integers(5, 15)))}</p>",
            }
            a_owner = maybe_user()
            if a_owner is not None:
                a_attrs["OwnerUserId"] = a_owner
            posts_rows.append(a_attrs)
            truth.n_answers += 1

        for _ in range(int(rng.poisson(0.8))):
            add_comment(qid, year)
        for aid in answer_ids:
            for _ in range(int(rng.poisson(0.4))):
                add_comment(aid, year)

    for _ in range(n_other_posts):
        posts_rows.append(
            {
                "Id": next_post_id(),
                "PostTypeId": 4,
                "CreationDate": _date(rng, start_year),
                "Body": "<p>tag wiki</p>",
            }
        )
        truth.n_other_posts += 1

    for i in range(n_orphan_comments):
        comments_rows.append(
            {
                "Id": next_comment_id(),
                "PostId": 99_000_000 + i,
                "Text": "comment on a long-deleted post",
                "CreationDate": _date(rng, end_year),
            }
        )
        truth.n_comments += 1
        truth.orphan_comments += 1

    with open(out_dir / "Posts.xml", "w", encoding="utf-8") as fh:
        fh.write('<?xml version="1.0" encoding="utf-8"?>\n<posts>\n')
        for attrs in posts_rows:
            _row(fh, attrs)
        fh.write("</posts>\n")
    with open(out_dir / "Comments.xml", "w", encoding="utf-8") as fh:
        fh.write('<?xml version="1.0" encoding="utf-8"?>\n<comments>\n')
        for attrs in comments_rows:
            _row(fh, attrs)
        fh.write("</comments>\n")
    with open(out_dir / "Users.xml", "w", encoding="utf-8") as fh:
        fh.write('<?xml version="1.0" encoding="utf-8"?>\n<users>\n')
        for uid in user_ids:
            attrs = {"Id": uid}
            about = str(rng.choice(_ABOUT_SNIPPETS))
            if about:
                attrs["AboutMe"] = about
            _row(fh, attrs)
        fh.write("</users>\n")
    return truth
