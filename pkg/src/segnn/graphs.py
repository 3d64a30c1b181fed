"""The communication property graph: one labelled graph per question.

Nodes carry exactly two properties (id, text); edges carry none. The legal
edge label / endpoint label combinations are fixed by the schema:

    POSTS     User    -> Question | Answer | Comment
    ANSWERS   Answer  -> Question
    COMMENTS  Comment -> Question | Answer
"""

from __future__ import annotations

import json
import struct
import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import (
    GraphChecksumError,
    GraphFormatError,
    GraphTruncationError,
    GraphVersionError,
    SegnnError,
    StageArtifactError,
)
from .ingest import CommentRecord, PostRecord, PostType, UserRecord, strip_html

FORMAT_VERSION = 1


class NodeLabel(Enum):
    QUESTION = "Question"
    ANSWER = "Answer"
    COMMENT = "Comment"
    USER = "User"


class EdgeLabel(Enum):
    POSTS = "POSTS"
    ANSWERS = "ANSWERS"
    COMMENTS = "COMMENTS"


ALLOWED_EDGE_TRIPLES = {
    (EdgeLabel.POSTS, NodeLabel.USER, NodeLabel.QUESTION),
    (EdgeLabel.POSTS, NodeLabel.USER, NodeLabel.ANSWER),
    (EdgeLabel.POSTS, NodeLabel.USER, NodeLabel.COMMENT),
    (EdgeLabel.ANSWERS, NodeLabel.ANSWER, NodeLabel.QUESTION),
    (EdgeLabel.COMMENTS, NodeLabel.COMMENT, NodeLabel.QUESTION),
    (EdgeLabel.COMMENTS, NodeLabel.COMMENT, NodeLabel.ANSWER),
}


@dataclass
class Node:
    label: NodeLabel
    props: dict

    @classmethod
    def make(cls, label: NodeLabel, source_id: str, text: str) -> "Node":
        return cls(label=label, props={"id": source_id, "text": text})


@dataclass
class Edge:
    label: EdgeLabel
    source: int
    target: int


@dataclass
class PropertyGraph:
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    node_index: dict = field(default_factory=dict)

    def add_node(self, node: Node) -> int:
        key = (node.label, node.props["id"])
        if key in self.node_index:
            return self.node_index[key]
        self.node_index[key] = len(self.nodes)
        self.nodes.append(node)
        return self.node_index[key]

    def ordinal(self, label: NodeLabel, source_id: str) -> int:
        return self.node_index[(label, source_id)]


@dataclass
class CommGraph:
    question_id: int
    graph: PropertyGraph
    unresolved: bool


@dataclass
class BuildCounters:
    excluded_comments: int = 0
    orphan_comments: int = 0
    other_target_comments: int = 0
    orphan_answers: int = 0
    placeholder_graphs: int = 0


def _anon_id(question_id: int) -> str:
    return f"anon:{question_id}"


def question_text(q: PostRecord) -> str:
    """Title and stripped body, concatenated."""
    title = strip_html(q.title) if q.title else ""
    body = strip_html(q.body_html)
    return f"{title} {body}".strip()


def build_comm_graph(
    question: PostRecord,
    answers: list[PostRecord],
    comments: list[CommentRecord],
    users_by_id: dict,
    counters: BuildCounters | None = None,
) -> CommGraph:
    """Assemble one communication graph around `question`.

    `answers` must all have parent_id == question.id; `comments` may contain
    strays, which are excluded and counted. Posts whose owner was deleted are
    attached to a single per-graph placeholder user.
    """
    for a in answers:
        if a.parent_id != question.id:
            raise SegnnError(
                f"answer {a.id} has parent {a.parent_id}, not {question.id}"
            )
    counters = counters if counters is not None else BuildCounters()
    answers = sorted(answers, key=lambda a: a.id)
    post_ids = {question.id} | {a.id for a in answers}
    kept_comments = sorted(
        (c for c in comments if c.post_id in post_ids), key=lambda c: c.id
    )
    counters.excluded_comments += len(comments) - len(kept_comments)

    owners = [question.owner_user_id]
    owners.extend(a.owner_user_id for a in answers)
    owners.extend(c.user_id for c in kept_comments)
    real_user_ids = sorted({uid for uid in owners if uid is not None})
    needs_anon = any(uid is None for uid in owners)
    if needs_anon:
        counters.placeholder_graphs += 1

    g = PropertyGraph()
    g.add_node(Node.make(NodeLabel.QUESTION, str(question.id), question_text(question)))
    for a in answers:
        g.add_node(Node.make(NodeLabel.ANSWER, str(a.id), strip_html(a.body_html)))
    for c in kept_comments:
        g.add_node(Node.make(NodeLabel.COMMENT, str(c.id), strip_html(c.text)))
    for uid in real_user_ids:
        user = users_by_id.get(uid)
        about = strip_html(user.about_me_html) if user is not None else ""
        g.add_node(Node.make(NodeLabel.USER, str(uid), about))
    anon_key = _anon_id(question.id)
    if needs_anon:
        g.add_node(Node.make(NodeLabel.USER, anon_key, ""))

    def poster(uid) -> int:
        key = str(uid) if uid is not None else anon_key
        return g.ordinal(NodeLabel.USER, key)

    q_ord = g.ordinal(NodeLabel.QUESTION, str(question.id))
    for a in answers:
        g.edges.append(
            Edge(EdgeLabel.ANSWERS, g.ordinal(NodeLabel.ANSWER, str(a.id)), q_ord)
        )
    for c in kept_comments:
        target = (
            q_ord
            if c.post_id == question.id
            else g.ordinal(NodeLabel.ANSWER, str(c.post_id))
        )
        g.edges.append(
            Edge(EdgeLabel.COMMENTS, g.ordinal(NodeLabel.COMMENT, str(c.id)), target)
        )
    g.edges.append(Edge(EdgeLabel.POSTS, poster(question.owner_user_id), q_ord))
    for a in answers:
        g.edges.append(
            Edge(
                EdgeLabel.POSTS,
                poster(a.owner_user_id),
                g.ordinal(NodeLabel.ANSWER, str(a.id)),
            )
        )
    for c in kept_comments:
        g.edges.append(
            Edge(
                EdgeLabel.POSTS,
                poster(c.user_id),
                g.ordinal(NodeLabel.COMMENT, str(c.id)),
            )
        )

    accepted = question.accepted_answer_id
    resolved = accepted is not None and accepted in {a.id for a in answers}
    return CommGraph(question_id=question.id, graph=g, unresolved=not resolved)


@dataclass
class CorpusBuildReport:
    graphs: int = 0
    resolved: int = 0
    unresolved: int = 0
    counters: BuildCounters = field(default_factory=BuildCounters)


def build_corpus(
    posts: list[PostRecord],
    comments: list[CommentRecord],
    users: list[UserRecord],
) -> tuple[list[CommGraph], CorpusBuildReport]:
    """One communication graph per question, in question-id order."""
    report = CorpusBuildReport()
    posts_by_id = {p.id: p for p in posts}
    users_by_id = {u.id: u for u in users}
    answers_by_question: dict = defaultdict(list)
    for p in posts:
        if p.post_type is PostType.ANSWER:
            parent = posts_by_id.get(p.parent_id)
            if parent is None or parent.post_type is not PostType.QUESTION:
                report.counters.orphan_answers += 1
            else:
                answers_by_question[parent.id].append(p)
    comments_by_question: dict = defaultdict(list)
    for c in comments:
        target = posts_by_id.get(c.post_id)
        if target is None:
            report.counters.orphan_comments += 1
        elif target.post_type is PostType.QUESTION:
            comments_by_question[target.id].append(c)
        elif target.post_type is PostType.ANSWER:
            parent = posts_by_id.get(target.parent_id)
            if parent is None:
                report.counters.orphan_comments += 1
            else:
                comments_by_question[parent.id].append(c)
        else:
            report.counters.other_target_comments += 1

    graphs = []
    for p in sorted(posts, key=lambda p: p.id):
        if p.post_type is not PostType.QUESTION:
            continue
        g = build_comm_graph(
            p,
            answers_by_question.get(p.id, []),
            comments_by_question.get(p.id, []),
            users_by_id,
            report.counters,
        )
        graphs.append(g)
        report.graphs += 1
        if g.unresolved:
            report.unresolved += 1
        else:
            report.resolved += 1
    return graphs, report


# --- schema validation ------------------------------------------------------


@dataclass
class Violation:
    rule: str
    element: str
    detail: str

    def __str__(self):
        return f"[{self.rule}] {self.element}: {self.detail}"


def validate_schema(g: CommGraph) -> list[Violation]:
    """Every Node/Edge/CommGraph invariant, checked; never raises."""
    out: list[Violation] = []
    nodes = g.graph.nodes
    edges = g.graph.edges
    n = len(nodes)

    seen_keys = set()
    for i, node in enumerate(nodes):
        if set(node.props.keys()) != {"id", "text"}:
            out.append(
                Violation(
                    "node-props",
                    f"node {i}",
                    f"expected exactly id/text, got {sorted(node.props)}",
                )
            )
        key = (node.label, node.props.get("id"))
        if key in seen_keys:
            out.append(
                Violation("node-key-unique", f"node {i}", f"duplicate key {key}")
            )
        seen_keys.add(key)

    questions = [i for i, nd in enumerate(nodes) if nd.label is NodeLabel.QUESTION]
    if len(questions) != 1:
        out.append(
            Violation(
                "one-question",
                "graph",
                f"expected exactly 1 Question node, found {len(questions)}",
            )
        )
    if n < 2:
        out.append(Violation("min-nodes", "graph", f"node count {n} < 2"))
    if len(edges) < 1:
        out.append(Violation("min-edges", "graph", "edge count 0 < 1"))

    posts_in = [0] * n
    answers_out = [0] * n
    comments_out = [0] * n
    adjacency = [[] for _ in range(n)]
    for j, e in enumerate(edges):
        if not (0 <= e.source < n and 0 <= e.target < n):
            out.append(
                Violation(
                    "edge-endpoint",
                    f"edge {j}",
                    f"endpoints ({e.source}, {e.target}) out of range 0..{n - 1}",
                )
            )
            continue
        triple = (e.label, nodes[e.source].label, nodes[e.target].label)
        if triple not in ALLOWED_EDGE_TRIPLES:
            out.append(
                Violation(
                    "edge-triple",
                    f"edge {j}",
                    f"illegal label triple {triple[0].value}: "
                    f"{triple[1].value} -> {triple[2].value}",
                )
            )
        if e.label is EdgeLabel.POSTS:
            posts_in[e.target] += 1
        elif e.label is EdgeLabel.ANSWERS:
            answers_out[e.source] += 1
        elif e.label is EdgeLabel.COMMENTS:
            comments_out[e.source] += 1
        adjacency[e.source].append(e.target)
        adjacency[e.target].append(e.source)

    for i, node in enumerate(nodes):
        if node.label is not NodeLabel.USER and posts_in[i] != 1:
            out.append(
                Violation(
                    "posts-indegree",
                    f"node {i}",
                    f"{node.label.value} has {posts_in[i]} incoming POSTS edges",
                )
            )
        if node.label is NodeLabel.ANSWER and answers_out[i] != 1:
            out.append(
                Violation(
                    "answers-outdegree",
                    f"node {i}",
                    f"Answer has {answers_out[i]} outgoing ANSWERS edges",
                )
            )
        if node.label is NodeLabel.COMMENT and comments_out[i] != 1:
            out.append(
                Violation(
                    "comments-outdegree",
                    f"node {i}",
                    f"Comment has {comments_out[i]} outgoing COMMENTS edges",
                )
            )

    if n > 0:
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != n:
            out.append(
                Violation(
                    "weakly-connected",
                    "graph",
                    f"only {len(seen)} of {n} nodes reachable from node 0",
                )
            )
    return out


# --- binary serialization ----------------------------------------------------

_NODE_CODES = {label: i for i, label in enumerate(NodeLabel)}
_NODE_FROM_CODE = {i: label for label, i in _NODE_CODES.items()}
_EDGE_CODES = {label: i for i, label in enumerate(EdgeLabel)}
_EDGE_FROM_CODE = {i: label for label, i in _EDGE_CODES.items()}


def _encode_payload(g: CommGraph) -> bytes:
    parts = [struct.pack("<QB", g.question_id, 1 if g.unresolved else 0)]
    parts.append(struct.pack("<I", len(g.graph.nodes)))
    for node in g.graph.nodes:
        sid = node.props["id"].encode("utf-8")
        text = node.props["text"].encode("utf-8")
        parts.append(struct.pack("<BH", _NODE_CODES[node.label], len(sid)))
        parts.append(sid)
        parts.append(struct.pack("<I", len(text)))
        parts.append(text)
    parts.append(struct.pack("<I", len(g.graph.edges)))
    for e in g.graph.edges:
        parts.append(struct.pack("<BII", _EDGE_CODES[e.label], e.source, e.target))
    return b"".join(parts)


def _decode_payload(payload: bytes) -> CommGraph:
    try:
        offset = 0
        question_id, unresolved = struct.unpack_from("<QB", payload, offset)
        offset += 9
        (n_nodes,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        g = PropertyGraph()
        for _ in range(n_nodes):
            code, sid_len = struct.unpack_from("<BH", payload, offset)
            offset += 3
            sid = payload[offset : offset + sid_len].decode("utf-8")
            offset += sid_len
            (text_len,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            text = payload[offset : offset + text_len].decode("utf-8")
            offset += text_len
            g.add_node(Node.make(_NODE_FROM_CODE[code], sid, text))
        (n_edges,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        for _ in range(n_edges):
            code, src, dst = struct.unpack_from("<BII", payload, offset)
            offset += 9
            g.edges.append(Edge(_EDGE_FROM_CODE[code], src, dst))
        if offset != len(payload):
            raise GraphFormatError("trailing bytes in graph payload")
        if len(g.nodes) != n_nodes:
            raise GraphFormatError("duplicate node keys in payload")
        return CommGraph(question_id=question_id, graph=g, unresolved=bool(unresolved))
    except struct.error as exc:
        raise GraphTruncationError(f"graph payload truncated: {exc}") from exc
    except KeyError as exc:
        raise GraphFormatError(f"unknown label code {exc}") from exc


def serialize(g: CommGraph) -> bytes:
    """Length-prefixed record: u32 payload length, version byte, payload, CRC32."""
    payload = _encode_payload(g)
    return (
        struct.pack("<I", len(payload))
        + bytes([FORMAT_VERSION])
        + payload
        + struct.pack("<I", zlib.crc32(payload))
    )


def _read_record(data: bytes, offset: int) -> tuple[CommGraph, int]:
    if offset + 5 > len(data):
        raise GraphTruncationError("record header truncated")
    (length,) = struct.unpack_from("<I", data, offset)
    version = data[offset + 4]
    if version != FORMAT_VERSION:
        raise GraphVersionError(f"unsupported graph format version {version}")
    start = offset + 5
    end = start + length + 4
    if end > len(data):
        raise GraphTruncationError(
            f"record claims {length} payload bytes, only {len(data) - start - 4} left"
        )
    payload = data[start : start + length]
    (crc,) = struct.unpack_from("<I", data, start + length)
    if zlib.crc32(payload) != crc:
        raise GraphChecksumError("CRC32 mismatch in graph record")
    return _decode_payload(payload), end


def deserialize(data: bytes) -> CommGraph:
    if not data:
        raise GraphFormatError("empty byte stream")
    graph, end = _read_record(data, 0)
    if end != len(data):
        raise GraphFormatError("trailing bytes after graph record")
    return graph


# --- corpus persistence -------------------------------------------------------

GRAPHS_FILE = "graphs.dat"
MANIFEST_FILE = "manifest.json"


def write_corpus(corpus_dir, graphs: Iterable[CommGraph], community: str) -> dict:
    corpus_dir = Path(corpus_dir)
    corpus_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    resolved = 0
    with open(corpus_dir / GRAPHS_FILE, "wb") as fh:
        for g in graphs:
            fh.write(serialize(g))
            count += 1
            resolved += 0 if g.unresolved else 1
    manifest = {
        "format_version": FORMAT_VERSION,
        "community": community,
        "graph_count": count,
        "label_counts": {"resolved": resolved, "unresolved": count - resolved},
    }
    with open(corpus_dir / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(corpus_dir) -> dict:
    path = Path(corpus_dir) / MANIFEST_FILE
    if not path.exists():
        raise StageArtifactError(str(path), "build-graphs")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def iter_corpus(corpus_dir) -> Iterator[CommGraph]:
    path = Path(corpus_dir) / GRAPHS_FILE
    if not path.exists():
        raise StageArtifactError(str(path), "build-graphs")
    data = path.read_bytes()
    offset = 0
    while offset < len(data):
        graph, offset = _read_record(data, offset)
        yield graph


def load_corpus(corpus_dir) -> list[CommGraph]:
    return list(iter_corpus(corpus_dir))
