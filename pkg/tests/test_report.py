"""Dataset/series file formats and evaluation metrics."""

import numpy as np
import pytest

from gradmatch.errors import ConfigError
from gradmatch.report import (
    parameter_metrics,
    read_dataset_csv,
    rmse_per_state,
    write_dataset_csv,
    write_series_csv,
)


class TestDatasetCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        times = np.sort(rng.uniform(0, 10, size=7))
        states = rng.normal(size=(3, 7))
        path = tmp_path / "d.csv"
        write_dataset_csv(path, times, states)
        t2, s2 = read_dataset_csv(path)
        assert np.array_equal(t2, times)
        assert np.array_equal(s2, states)

    def test_header_row(self, tmp_path):
        path = tmp_path / "d.csv"
        write_dataset_csv(path, [0.0, 1.0], np.zeros((2, 2)))
        assert path.read_text().splitlines()[0] == "t,x1,x2"

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("time,a,b\n0,1,2\n")
        with pytest.raises(ConfigError, match="line 1"):
            read_dataset_csv(path)

    def test_wrong_column_count_reports_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("t,x1,x2\n0.0,1.0,2.0\n0.1,1.0\n")
        with pytest.raises(ConfigError, match="line 3"):
            read_dataset_csv(path)

    def test_non_numeric_reports_line(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("t,x1\n0.0,oops\n")
        with pytest.raises(ConfigError, match="line 2"):
            read_dataset_csv(path)


class TestMetrics:
    def test_exact_estimate_gives_zero_errors(self):
        m = parameter_metrics([2.0, 1.0, 4.0], [2.0, 1.0, 4.0])
        assert m["abs_error"] == [0.0, 0.0, 0.0]
        assert m["rel_error"] == [0.0, 0.0, 0.0]
        assert m["spearman"] == 1.0

    def test_reversed_ranking_gives_minus_one(self):
        m = parameter_metrics([5.0, 4.0, 3.0, 2.0, 1.0], [1.0, 2.0, 3.0, 4.0, 5.0])
        assert m["spearman"] == -1.0

    def test_rmse_per_state(self):
        a = np.zeros((2, 4))
        b = np.ones((2, 4)) * np.array([[1.0], [2.0]])
        assert rmse_per_state(a, b) == [1.0, 2.0]

    def test_rmse_shape_mismatch(self):
        with pytest.raises(ValueError):
            rmse_per_state(np.zeros((2, 3)), np.zeros((3, 2)))


class TestResultSchema:
    def _minimal_doc(self):
        return {
            "schema": "gradmatch-result/1",
            "config": {},
            "model": "dx1 = -theta1*x1\n",
            "kernel": [],
            "sigma": [0.1],
            "gamma": [0.01],
            "theta": {"mean": [1.0], "cov": [[0.1]], "sd": [0.3]},
            "proxy": {"times": [0.0], "means": [[1.0]], "variances": [[0.1]]},
            "elbo_trace": [0.0],
            "iterations": 1,
            "converged": True,
            "reintegrated": {"times": [0.0], "states": [[1.0]]},
            "versions": {},
        }

    def test_valid_document_accepted(self):
        from gradmatch.report import validate_result_document

        validate_result_document(self._minimal_doc())

    def test_wrong_schema_rejected(self):
        from gradmatch.report import validate_result_document

        doc = self._minimal_doc()
        doc["schema"] = "gradmatch-result/0"
        with pytest.raises(ConfigError, match="schema"):
            validate_result_document(doc)

    def test_missing_field_named(self):
        from gradmatch.report import validate_result_document

        doc = self._minimal_doc()
        del doc["elbo_trace"]
        with pytest.raises(ConfigError, match="elbo_trace"):
            validate_result_document(doc)


class TestSeriesCsv:
    def test_long_format_layout(self, tmp_path):
        path = tmp_path / "series.csv"
        times = np.array([0.0, 0.5])
        write_series_csv(
            path,
            times,
            {
                "truth": np.array([[1.0, 2.0]]),
                "observations": np.array([[1.1, 2.1]]),
                "proxy_mean": np.array([[0.9, 1.9]]),
            },
        )
        lines = path.read_text().splitlines()
        assert lines[0] == "series,state,t,value"
        assert len(lines) == 1 + 3 * 2
        assert lines[1].startswith("truth,1,0.0,")
        # series appear in the documented order
        names = [ln.split(",")[0] for ln in lines[1:]]
        assert names == ["truth"] * 2 + ["observations"] * 2 + ["proxy_mean"] * 2
