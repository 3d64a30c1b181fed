"""Stack Exchange dump ingestion.

Parses the extracted Posts/Comments/Users XML into typed records with a
single streaming pass per file (expat; bounded memory per row), derives the
resolved label for every question, and summarizes the corpus.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from html.parser import HTMLParser
from typing import Callable
from xml.parsers import expat

from .errors import DumpParseError, SegnnError


class PostType(Enum):
    QUESTION = "Question"
    ANSWER = "Answer"
    OTHER = "Other"


@dataclass(slots=True)
class PostRecord:
    id: int
    post_type: PostType
    body_html: str
    creation_date: datetime
    parent_id: int | None = None
    accepted_answer_id: int | None = None
    owner_user_id: int | None = None
    title: str | None = None
    tags: list[str] = field(default_factory=list)


@dataclass(slots=True)
class CommentRecord:
    id: int
    post_id: int
    text: str
    creation_date: datetime
    user_id: int | None = None


@dataclass(slots=True)
class UserRecord:
    id: int
    about_me_html: str | None = None


@dataclass
class ParseResult:
    """Parsed records plus the row-level errors that were skipped over."""

    records: list
    row_errors: list[str]

    @property
    def skipped(self) -> int:
        return len(self.row_errors)


@dataclass
class CorpusSummary:
    n_questions: int
    n_answers: int
    n_comments: int
    n_users: int
    pct_resolved: float
    foundation_year: int | None


def _stream_rows(source, on_row: Callable[[dict, int], None]):
    parser = expat.ParserCreate()
    counter = {"rows": 0}

    def start(name, attrs):
        if name == "row":
            counter["rows"] += 1
            on_row(attrs, counter["rows"])

    parser.StartElementHandler = start
    try:
        if hasattr(source, "read"):
            parser.ParseFile(source)
        else:
            with open(source, "rb") as fh:
                parser.ParseFile(fh)
    except expat.ExpatError as exc:
        raise DumpParseError(
            f"malformed XML: {expat.errors.messages[exc.code]}",
            byte_offset=parser.ErrorByteIndex,
            line=parser.ErrorLineNumber,
            column=parser.ErrorColumnNumber,
        ) from exc


def _parse_date(value: str) -> datetime:
    return datetime.fromisoformat(value).replace(tzinfo=timezone.utc)


def _opt_int(attrs: dict, name: str) -> int | None:
    return int(attrs[name]) if name in attrs else None


_TAG_RE = re.compile(r"<([^<>]*)>")


def _parse_tags(value: str) -> list[str]:
    if not value:
        return []
    if "<" in value:
        return _TAG_RE.findall(value)
    return [t for t in value.split("|") if t]


def parse_posts(source) -> ParseResult:
    """Parse Posts.xml. Rows that are neither question (1) nor answer (2) are
    kept as PostType.OTHER; graph building ignores them."""
    records: list[PostRecord] = []
    errors: list[str] = []

    def on_row(attrs, n):
        try:
            if "Id" not in attrs or "PostTypeId" not in attrs:
                raise KeyError("missing mandatory attribute Id/PostTypeId")
            post_id = int(attrs["Id"])
            if post_id <= 0:
                raise ValueError(f"non-positive post id {post_id}")
            type_id = attrs["PostTypeId"]
            if "CreationDate" not in attrs:
                raise KeyError("missing CreationDate")
            created = _parse_date(attrs["CreationDate"])
            body = attrs.get("Body", "")
            owner = _opt_int(attrs, "OwnerUserId")
            if type_id == "1":
                records.append(
                    PostRecord(
                        id=post_id,
                        post_type=PostType.QUESTION,
                        body_html=body,
                        creation_date=created,
                        accepted_answer_id=_opt_int(attrs, "AcceptedAnswerId"),
                        owner_user_id=owner,
                        title=attrs.get("Title"),
                        tags=_parse_tags(attrs.get("Tags", "")),
                    )
                )
            elif type_id == "2":
                if "ParentId" not in attrs:
                    raise KeyError("answer row missing ParentId")
                records.append(
                    PostRecord(
                        id=post_id,
                        post_type=PostType.ANSWER,
                        body_html=body,
                        creation_date=created,
                        parent_id=int(attrs["ParentId"]),
                        owner_user_id=owner,
                    )
                )
            else:
                records.append(
                    PostRecord(
                        id=post_id,
                        post_type=PostType.OTHER,
                        body_html=body,
                        creation_date=created,
                        owner_user_id=owner,
                    )
                )
        except (KeyError, ValueError) as exc:
            errors.append(f"posts row {n}: {exc}")

    _stream_rows(source, on_row)
    return ParseResult(records, errors)


def parse_comments(source) -> ParseResult:
    records: list[CommentRecord] = []
    errors: list[str] = []

    def on_row(attrs, n):
        try:
            records.append(
                CommentRecord(
                    id=int(attrs["Id"]),
                    post_id=int(attrs["PostId"]),
                    text=attrs.get("Text", ""),
                    creation_date=_parse_date(attrs["CreationDate"]),
                    user_id=_opt_int(attrs, "UserId"),
                )
            )
        except (KeyError, ValueError) as exc:
            errors.append(f"comments row {n}: {exc}")

    _stream_rows(source, on_row)
    return ParseResult(records, errors)


def parse_users(source) -> ParseResult:
    records: list[UserRecord] = []
    errors: list[str] = []

    def on_row(attrs, n):
        try:
            records.append(
                UserRecord(id=int(attrs["Id"]), about_me_html=attrs.get("AboutMe"))
            )
        except (KeyError, ValueError) as exc:
            errors.append(f"users row {n}: {exc}")

    _stream_rows(source, on_row)
    return ParseResult(records, errors)


class _TextExtractor(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []

    def handle_data(self, data):
        self.parts.append(data)

    def handle_starttag(self, tag, attrs):
        self.parts.append(" ")

    def handle_endtag(self, tag):
        self.parts.append(" ")

    def handle_startendtag(self, tag, attrs):
        self.parts.append(" ")


def strip_html(html_text: str | None) -> str:
    """Tags removed, entities decoded, whitespace collapsed to single spaces.

    Code-block contents survive as text; unclosed tags are handled leniently.
    """
    if not html_text:
        return ""
    extractor = _TextExtractor()
    extractor.feed(html_text)
    extractor.close()
    return " ".join("".join(extractor.parts).split())


def resolved_label(q: PostRecord, posts_by_id: dict) -> bool:
    """True iff the question's accepted answer exists and answers it."""
    if q.post_type is not PostType.QUESTION:
        raise SegnnError(f"resolved_label expects a question, got {q.post_type}")
    if q.accepted_answer_id is None:
        return False
    target = posts_by_id.get(q.accepted_answer_id)
    return (
        target is not None
        and target.post_type is PostType.ANSWER
        and target.parent_id == q.id
    )


def label_questions(posts: list[PostRecord]) -> tuple[dict, int]:
    """Resolved label per question id, plus a count of dangling accepted ids."""
    posts_by_id = {p.id: p for p in posts}
    labels = {}
    dangling = 0
    for p in posts:
        if p.post_type is PostType.QUESTION:
            labels[p.id] = resolved_label(p, posts_by_id)
            if p.accepted_answer_id is not None and not labels[p.id]:
                dangling += 1
    return labels, dangling


def summarize_corpus(
    posts: list[PostRecord],
    comments: list[CommentRecord],
    users: list[UserRecord],
) -> CorpusSummary:
    labels, _ = label_questions(posts)
    n_questions = len(labels)
    resolved = sum(labels.values())
    return CorpusSummary(
        n_questions=n_questions,
        n_answers=sum(1 for p in posts if p.post_type is PostType.ANSWER),
        n_comments=len(comments),
        n_users=len(users),
        pct_resolved=resolved / n_questions if n_questions else 0.0,
        foundation_year=min(p.creation_date for p in posts).year if posts else None,
    )


def count_orphan_comments(
    posts: list[PostRecord], comments: list[CommentRecord]
) -> int:
    known = {p.id for p in posts}
    return sum(1 for c in comments if c.post_id not in known)


def ingestion_report(
    posts: ParseResult, comments: ParseResult, users: ParseResult
) -> dict:
    """The UTF-8 JSON payload written after ingestion: counts, orphans, skips."""
    summary = summarize_corpus(posts.records, comments.records, users.records)
    _, dangling = label_questions(posts.records)
    return {
        "counts": {
            "questions": summary.n_questions,
            "answers": summary.n_answers,
            "other_posts": sum(
                1 for p in posts.records if p.post_type is PostType.OTHER
            ),
            "comments": summary.n_comments,
            "users": summary.n_users,
        },
        "pct_resolved": summary.pct_resolved,
        "foundation_year": summary.foundation_year,
        "orphan_comments": count_orphan_comments(posts.records, comments.records),
        "dangling_accepted_answers": dangling,
        "skipped_rows": {
            "posts": posts.skipped,
            "comments": comments.skipped,
            "users": users.skipped,
        },
        "row_errors": posts.row_errors + comments.row_errors + users.row_errors,
    }


# --- stage-artifact (de)serialization -------------------------------------


def posts_to_jsonl(path, records: list[PostRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for p in records:
            fh.write(
                json.dumps(
                    {
                        "id": p.id,
                        "type": p.post_type.value,
                        "body": p.body_html,
                        "date": p.creation_date.isoformat(),
                        "parent": p.parent_id,
                        "accepted": p.accepted_answer_id,
                        "owner": p.owner_user_id,
                        "title": p.title,
                        "tags": p.tags,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def posts_from_jsonl(path) -> list[PostRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            out.append(
                PostRecord(
                    id=d["id"],
                    post_type=PostType(d["type"]),
                    body_html=d["body"],
                    creation_date=datetime.fromisoformat(d["date"]),
                    parent_id=d["parent"],
                    accepted_answer_id=d["accepted"],
                    owner_user_id=d["owner"],
                    title=d["title"],
                    tags=d["tags"],
                )
            )
    return out


def comments_to_jsonl(path, records: list[CommentRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for c in records:
            fh.write(
                json.dumps(
                    {
                        "id": c.id,
                        "post": c.post_id,
                        "text": c.text,
                        "date": c.creation_date.isoformat(),
                        "user": c.user_id,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def comments_from_jsonl(path) -> list[CommentRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            out.append(
                CommentRecord(
                    id=d["id"],
                    post_id=d["post"],
                    text=d["text"],
                    creation_date=datetime.fromisoformat(d["date"]),
                    user_id=d["user"],
                )
            )
    return out


def users_to_jsonl(path, records: list[UserRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for u in records:
            fh.write(
                json.dumps({"id": u.id, "about": u.about_me_html}, ensure_ascii=False)
                + "\n"
            )


def users_from_jsonl(path) -> list[UserRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            d = json.loads(line)
            out.append(UserRecord(id=d["id"], about_me_html=d["about"]))
    return out
