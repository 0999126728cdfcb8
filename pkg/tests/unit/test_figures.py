"""Unit tests for the plotly figure builders."""

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from src.device_sim import DeviceSimulator
from src.patterns import confusion_matrix
from src.utils.figures import confusion_heatmap, device_trace_figure, impedance_figure


def impedance_frame() -> pd.DataFrame:
    t = np.linspace(0.0, 1.0, 11)
    return pd.DataFrame({
        "time_s": t,
        "commanded_y_mm": 46.0 - t,
        "actual_y_mm": 46.0 - t,
        "palm_y_mm": 42.0,
        "force_n": np.maximum(0.0, 4.0 - t) * 0.5,
    })


class TestFigures:
    """Test cases for the trace viewer figures."""

    def test_impedance_figure(self) -> None:
        fig = impedance_figure(impedance_frame())

        assert isinstance(fig, go.Figure)
        assert [trace.name for trace in fig.data] == ["commanded", "actual", "palm", "force"]
        assert len(fig.data[0].x) == 11

    def test_device_trace_figure_has_one_line_per_unit(self, simulator: DeviceSimulator) -> None:
        trace = simulator.run(simulator.initial_state(), [simulator.home_point] * 3, 5, 0.01).frame
        fig = device_trace_figure(trace, "act_y_mm")

        assert sorted(t.name for t in fig.data) == ["0", "1", "2"]
        assert trace["unit"].dtype == np.int64

    def test_confusion_heatmap(self, sample_trial_log: pd.DataFrame) -> None:
        pairs = zip(sample_trial_log["actual_id"], sample_trial_log["predicted_id"])
        report = confusion_matrix(pairs, labels=[1, 2, 3]).report()
        fig = confusion_heatmap(report)

        z = np.asarray(fig.data[0].z)
        assert z.shape == (3, 3)
        np.testing.assert_allclose(np.diag(z), [100.0, 50.0, 50.0])
