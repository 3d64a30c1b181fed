from datetime import datetime, timezone

import numpy as np
import pytest

from segnn.features import FeatureMode, HashingEmbedder
from segnn.graphs import build_corpus
from segnn.ingest import CommentRecord, PostRecord, PostType, UserRecord
from segnn.training import prepare_graph_dataset

_WORDS = "alpha beta gamma delta epsilon zeta eta theta iota kappa".split()


def make_toy_records(n_questions=32, seed=11):
    """A small, learnable community: resolved questions have more answers and
    slightly different wording, so 32 graphs are easy to memorize."""
    rng = np.random.default_rng(seed)
    users = [UserRecord(id=i, about_me_html=f"about user {i}") for i in range(1, 13)]
    posts = []
    comments = []
    pid = 0
    cid = 0
    for k in range(n_questions):
        resolved = k % 2 == 0
        pid += 1
        qid = pid
        n_answers = 1 + int(rng.integers(0, 3)) if resolved else int(rng.integers(0, 2))
        answer_ids = []
        for _ in range(n_answers):
            pid += 1
            answer_ids.append(pid)
        hint = "solved thanks accepted" if resolved else "stuck nobody knows"
        body = f"<p>question {k} {' '.join(rng.choice(_WORDS, 6))} {hint}</p>"
        posts.append(
            PostRecord(
                id=qid,
                post_type=PostType.QUESTION,
                body_html=body,
                creation_date=datetime(2015, 1 + k % 12, 1, tzinfo=timezone.utc),
                accepted_answer_id=int(rng.choice(answer_ids)) if resolved else None,
                owner_user_id=int(rng.integers(1, 13)),
                title=f"toy question {k}",
            )
        )
        for aid in answer_ids:
            posts.append(
                PostRecord(
                    id=aid,
                    post_type=PostType.ANSWER,
                    body_html=f"<p>answer {aid} {' '.join(rng.choice(_WORDS, 4))}</p>",
                    creation_date=datetime(2015, 6, 1, tzinfo=timezone.utc),
                    parent_id=qid,
                    owner_user_id=int(rng.integers(1, 13)),
                )
            )
        for _ in range(int(rng.integers(0, 3))):
            cid += 1
            target = qid if rng.random() < 0.5 or not answer_ids else int(
                rng.choice(answer_ids)
            )
            comments.append(
                CommentRecord(
                    id=cid,
                    post_id=target,
                    text=f"comment {cid} {' '.join(rng.choice(_WORDS, 3))}",
                    creation_date=datetime(2015, 7, 1, tzinfo=timezone.utc),
                    user_id=int(rng.integers(1, 13)),
                )
            )
    return posts, comments, users


@pytest.fixture(scope="session")
def toy_graphs():
    posts, comments, users = make_toy_records()
    graphs, _ = build_corpus(posts, comments, users)
    return graphs


@pytest.fixture(scope="session")
def toy_dataset_texttype(toy_graphs):
    return prepare_graph_dataset(
        toy_graphs, FeatureMode.TEXT_PLUS_TYPE, HashingEmbedder(16)
    )


@pytest.fixture(scope="session")
def toy_dataset_typeonly(toy_graphs):
    return prepare_graph_dataset(toy_graphs, FeatureMode.TYPE_ONLY)
