import numpy as np
import pytest

from splatpaint.pipeline import CycleState, PipelineReport
from splatpaint.reporting import (
    metrics_csv,
    pipeline_csv,
    pipeline_figure,
    save_heatmap,
    sparsity_csv,
    sparsity_figure,
    training_log_csv,
    write_csv,
)
from splatpaint.scene import load_image
from splatpaint.training import TrainLogEntry

PNG_MAGIC = b"\x89PNG"


def make_report(holdout=None):
    zeros = np.zeros((4, 4))
    cycles = [
        CycleState(index=k, theta=0.1 * (k - 1), strength=1.0 - 0.2 * (k - 1),
                   cloud=None, uncertainty=[zeros], fused=[zeros],
                   inpainted=[zeros], train_psnr=20.0 + k,
                   holdout_psnr=holdout and holdout + k)
        for k in (1, 2, 3)
    ]
    return PipelineReport(initial_train_psnr=19.5,
                          initial_holdout_psnr=holdout, cycles=cycles,
                          view_names=["a"])


class TestWriteCsv:
    def test_creates_parent_dirs(self, tmp_path):
        out = write_csv(tmp_path / "deep" / "x.csv", ["a", "b"], [[1, 2]])
        assert out.read_text().splitlines() == ["a,b", "1,2"]

    def test_empty_rows_leave_header_only(self, tmp_path):
        out = write_csv(tmp_path / "x.csv", ["a"], [])
        assert out.read_text().splitlines() == ["a"]


class TestHeatmap:
    def test_png_roundtrip_follows_colormap(self, tmp_path):
        vals = np.linspace(0, 1, 16).reshape(4, 4)
        out = save_heatmap(tmp_path / "h.png", vals)
        assert out.read_bytes()[:4] == PNG_MAGIC
        img = load_image(out)
        assert img.shape == (4, 4, 3)
        # inferno runs dark-to-bright, so luminance must grow with value
        lum = img.mean(axis=2).ravel()
        assert lum[0] < 0.1 and lum[-1] > 0.8
        assert np.all(np.diff(lum) > -1e-6)

    def test_values_outside_unit_range_are_clipped(self, tmp_path):
        a = save_heatmap(tmp_path / "a.png", np.full((2, 2), 2.0))
        b = save_heatmap(tmp_path / "b.png", np.ones((2, 2)))
        assert a.read_bytes() == b.read_bytes()


class TestPipelineReportFiles:
    def test_csv_rows_one_per_stage(self, tmp_path):
        report = make_report()
        out = pipeline_csv(tmp_path / "report.csv", report)
        lines = out.read_text().splitlines()
        assert lines[0] == "cycle,theta,strength,train_psnr,holdout_psnr,lpips,fid"
        assert len(lines) == 5
        assert lines[1].split(",")[0] == "initial"
        assert lines[2] == "1,0.0000,1.0000,21.0000,,,"

    def test_csv_holdout_column_filled_when_present(self, tmp_path):
        out = pipeline_csv(tmp_path / "report.csv", make_report(holdout=18.0))
        row = out.read_text().splitlines()[2].split(",")
        assert row[4] == "19.0000"

    @pytest.mark.parametrize("holdout", [None, 17.5])
    def test_figure_renders(self, tmp_path, holdout):
        out = pipeline_figure(tmp_path / "report.png", make_report(holdout))
        assert out.read_bytes()[:4] == PNG_MAGIC


class TestStudyFiles:
    ROWS = [(2, 31.25, 0.97123), (7, 24.5, 0.8)]

    def test_csv_preserves_row_order(self, tmp_path):
        out = sparsity_csv(tmp_path / "s.csv", self.ROWS)
        lines = out.read_text().splitlines()
        assert lines[0] == "interval,psnr,ssim,lpips,fid"
        assert lines[1] == "2,31.2500,0.971230,,"
        assert lines[2].startswith("7,")

    def test_figure_renders(self, tmp_path):
        out = sparsity_figure(tmp_path / "s.png", self.ROWS)
        assert out.read_bytes()[:4] == PNG_MAGIC


class TestMetricsCsv:
    def test_appends_mean_row(self, tmp_path):
        rows = [("v0", 30.0, 0.9), ("v1", 20.0, 0.7)]
        out = metrics_csv(tmp_path / "m.csv", rows)
        lines = out.read_text().splitlines()
        assert len(lines) == 4
        assert lines[-1] == "mean,25.0000,0.800000,,"

    def test_empty_rows_no_mean(self, tmp_path):
        out = metrics_csv(tmp_path / "m.csv", [])
        assert out.read_text().splitlines() == ["view,psnr,ssim,lpips,fid"]


class TestTrainingLogCsv:
    def test_one_row_per_entry(self, tmp_path):
        log = [TrainLogEntry(iteration=1, loss=0.5, psnr=10.0, num_splats=64),
               TrainLogEntry(iteration=2, loss=0.25, psnr=13.0, num_splats=80)]
        out = training_log_csv(tmp_path / "t.csv", log)
        lines = out.read_text().splitlines()
        assert lines[1] == "1,0.500000,10.0000,64"
        assert lines[2] == "2,0.250000,13.0000,80"
