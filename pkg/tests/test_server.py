import numpy as np
import pytest
from fastapi.testclient import TestClient

from breathlens.server import build_state, create_app, decimate_indices, load_data_dir
from breathlens.io import write_annotations, write_record


@pytest.fixture(scope="module")
def corpus(small_corpus):
    return small_corpus[:3]


@pytest.fixture(scope="module")
def client(small_model, corpus):
    records = [rec for rec, _ in corpus]
    annotations = {ann.record_id: ann for _, ann in corpus}
    state = build_state(small_model, records, annotations)
    app = create_app(state)
    return TestClient(app)


class TestDecimation:
    def test_short_input_passes_through(self):
        idx = decimate_indices(np.arange(10.0), 100)
        assert idx.tolist() == list(range(10))

    def test_bucket_extrema_preserved(self, rng):
        values = rng.normal(size=5000)
        max_points = 200
        idx = decimate_indices(values, max_points)
        assert len(idx) <= max_points + 2
        kept = set(idx.tolist())
        n_buckets = max_points // 2
        edges = np.linspace(0, len(values), n_buckets + 1).astype(int)
        for lo, hi in zip(edges[:-1], edges[1:]):
            bucket = values[lo:hi]
            assert lo + int(np.argmin(bucket)) in kept
            assert lo + int(np.argmax(bucket)) in kept

    def test_indices_sorted_unique(self, rng):
        idx = decimate_indices(rng.normal(size=3000), 64)
        assert np.all(np.diff(idx) > 0)


class TestRecordEndpoints:
    def test_list_records(self, client, corpus):
        response = client.get("/api/records")
        assert response.status_code == 200
        assert response.json() == sorted(rec.record_id for rec, _ in corpus)

    def test_get_record_slice(self, client, corpus):
        record = corpus[0][0]
        response = client.get(
            f"/api/records/{record.record_id}",
            params={"from_idx": 100, "to_idx": 600, "max_points": 64},
        )
        assert response.status_code == 200
        body = response.json()
        assert body["from_idx"] == 100 and body["to_idx"] == 600
        assert body["n_samples"] == len(record)
        assert len(body["indices"]) == len(body["flow"]) == len(body["pressure"])
        assert all(100 <= i < 600 for i in body["indices"])
        first = body["indices"][0]
        assert body["flow"][0] == pytest.approx(record.flow[first])

    def test_unknown_record_404(self, client):
        assert client.get("/api/records/nope").status_code == 404
        assert client.get("/api/records/nope/breaths").status_code == 404

    def test_minimal_max_points_is_well_formed(self, client, corpus):
        rid = corpus[0][0].record_id
        response = client.get(f"/api/records/{rid}", params={"max_points": 2})
        assert response.status_code == 200
        assert len(response.json()["indices"]) >= 2

    def test_get_is_deterministic(self, client, corpus):
        rid = corpus[0][0].record_id
        a = client.get(f"/api/records/{rid}", params={"max_points": 128}).json()
        b = client.get(f"/api/records/{rid}", params={"max_points": 128}).json()
        assert a == b


class TestBreathEndpoints:
    def test_breaths_carry_labels_and_confidence(self, client, corpus, small_model):
        rid = corpus[0][0].record_id
        body = client.get(f"/api/records/{rid}/breaths").json()
        assert len(body) > 5
        t_len = small_model.config.window_samples
        for view in body:
            assert view["record_id"] == rid
            assert 0.0 <= view["confidence"] <= 1.0
            assert view["label"] in (
                "artefact", "spontaneous", "mechanical", "triggered", "unclassifiable"
            )
            assert 0 <= view["start_idx"] < view["end_idx"] <= len(corpus[0][0])
            assert len(view["flow"]) == len(view["pressure"]) == t_len
        # ground-truth labels surface when annotations cover the segment
        assert any(v["annotated_label"] is not None for v in body)

    def test_every_breath_has_explanation(self, client, corpus, small_model):
        t_len = small_model.config.window_samples
        for rec, _ in corpus:
            for view in client.get(f"/api/records/{rec.record_id}/breaths").json():
                response = client.get(f"/api/breaths/{view['breath_id']}/explanation")
                assert response.status_code == 200
                body = response.json()
                assert len(body["combined"]) == t_len
                assert len(body["per_variable"]) == 2
                assert len(body["per_variable"][0]) == t_len
                assert min(body["combined"]) >= 0.0
                assert max(body["combined"]) <= 1.0

    def test_unknown_breath_404(self, client):
        assert client.get("/api/breaths/nope:000001/explanation").status_code == 404

    def test_display_pad_values_equal_boundary_samples(self, client, corpus):
        rid = corpus[0][0].record_id
        views = client.get(f"/api/records/{rid}/breaths").json()
        view = next(v for v in views if v["pad_left"] > 0)
        body = client.get(f"/api/breaths/{view['breath_id']}/explanation").json()
        first_real = view["pad_left"]
        last_real = len(view["flow"]) - 1 - view["pad_right"]
        assert body["display_pad_value_left"][0] == pytest.approx(view["flow"][first_real])
        assert body["display_pad_value_right"][1] == pytest.approx(view["pressure"][last_real])


class TestClassifyEndpoint:
    def test_valid_window(self, client, small_model, rng):
        t_len = small_model.config.window_samples
        window = rng.normal(size=(2, t_len)).tolist()
        response = client.post("/api/classify", json={"values": window})
        assert response.status_code == 200
        body = response.json()
        assert abs(sum(body["distribution"]) - 1.0) < 1e-9
        assert body["confidence"] == pytest.approx(max(body["distribution"]))
        assert len(body["explanation"]["combined"]) == t_len

    def test_wrong_variable_count_400_names_expected_shape(self, client, small_model):
        t_len = small_model.config.window_samples
        response = client.post(
            "/api/classify", json={"values": np.zeros((3, t_len)).tolist()}
        )
        assert response.status_code == 400
        assert "D=2" in response.json()["detail"]

    def test_wrong_length_400(self, client):
        response = client.post("/api/classify", json={"values": np.zeros((2, 10)).tolist()})
        assert response.status_code == 400

    def test_missing_values_400(self, client):
        assert client.post("/api/classify", json={}).status_code == 400

    def test_non_numeric_400(self, client):
        response = client.post("/api/classify", json={"values": [["a"], ["b"]]})
        assert response.status_code == 400


class TestLoadDataDir:
    def test_reads_records_and_annotations(self, tmp_path, corpus):
        for rec, ann in corpus:
            write_record(rec, tmp_path / f"{rec.record_id}.csv")
            write_annotations(ann, tmp_path / f"{rec.record_id}.annotations.csv")
        records, annotations = load_data_dir(tmp_path)
        assert len(records) == len(corpus)
        assert set(annotations) == {rec.record_id for rec, _ in corpus}


class TestStaticMount:
    def test_serves_viewer_assets_next_to_api(self, tmp_path, small_model, corpus):
        static = tmp_path / "dist"
        static.mkdir()
        (static / "index.html").write_text("<html><body>viewer</body></html>")
        (static / "style.css").write_text("body{}")
        state = build_state(small_model, [corpus[0][0]], {})
        client = TestClient(create_app(state, static_dir=static))
        assert client.get("/").status_code == 200
        assert "viewer" in client.get("/").text
        assert client.get("/style.css").status_code == 200
        # API routes still win over the static mount
        assert client.get("/api/records").status_code == 200
