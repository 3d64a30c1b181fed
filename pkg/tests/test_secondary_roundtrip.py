"""Cross-component round trip: the exporter's SEEMB1 output feeds the
primary pipeline. Skipped when the exporter has not been built; the primary
suite is self-sufficient with the hashing embedder."""

import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

EXPORTER = Path(__file__).resolve().parents[1] / "exporter"
EXPORTER_CLI = EXPORTER / "dist" / "cli.js"
FIXTURE_CORPUS = EXPORTER / "test" / "fixtures" / "corpus"

pytestmark = pytest.mark.skipif(
    not EXPORTER_CLI.exists() or shutil.which("node") is None,
    reason="secondary exporter not built",
)


def test_exporter_file_round_trips_into_primary(tmp_path):
    from segnn.features import FeatureMode, build_features, load_precomputed, node_key
    from segnn.graphs import load_corpus

    out = tmp_path / "exported.seemb"
    proc = subprocess.run(
        [
            "node", str(EXPORTER_CLI),
            "--corpus", str(FIXTURE_CORPUS),
            "--out", str(out),
            "--backend", "stub",
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    provider = load_precomputed(out)
    assert provider.d_text == 384
    graphs = load_corpus(FIXTURE_CORPUS)
    keys = [
        node_key(n.label, n.props["id"]) for g in graphs for n in g.graph.nodes
    ]
    missing = [k for k in keys if k not in provider.vectors]
    assert missing == []
    assert len(provider.vectors) == 6
    for key in keys:
        vec = provider.vector_for(key, "")
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-4
    x = build_features(graphs[0], FeatureMode.TEXT_PLUS_TYPE, provider)
    assert x.shape == (6, 388)
    assert np.all(np.isfinite(x))
