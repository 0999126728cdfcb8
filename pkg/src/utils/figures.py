"""
Plotly figure builders for the trace viewer.
"""

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
from plotly.subplots import make_subplots


def impedance_figure(trace: pd.DataFrame) -> go.Figure:
    """Commanded, actual and palm height over time, with the sensed force below."""
    fig = make_subplots(rows=2, cols=1, shared_xaxes=True, row_heights=[0.7, 0.3], vertical_spacing=0.05)
    fig.add_trace(
        go.Scatter(x=trace["time_s"], y=trace["commanded_y_mm"], name="commanded", line=dict(color="blue")),
        row=1,
        col=1,
    )
    fig.add_trace(
        go.Scatter(x=trace["time_s"], y=trace["actual_y_mm"], name="actual", line=dict(color="green")),
        row=1,
        col=1,
    )
    fig.add_trace(
        go.Scatter(x=trace["time_s"], y=trace["palm_y_mm"], name="palm", line=dict(color="red", dash="dash")),
        row=1,
        col=1,
    )
    fig.add_trace(
        go.Scatter(x=trace["time_s"], y=trace["force_n"], name="force", line=dict(color="gray")),
        row=2,
        col=1,
    )
    fig.update_yaxes(title_text="y (mm)", row=1, col=1)
    fig.update_yaxes(title_text="force (N)", row=2, col=1)
    fig.update_xaxes(title_text="time (s)", row=2, col=1)
    fig.update_layout(title="Impedance rendering", height=600)
    return fig


def device_trace_figure(trace: pd.DataFrame, column: str = "force_n") -> go.Figure:
    """One line per unit for a device trace column."""
    frame = trace.copy()
    frame["unit"] = frame["unit"].astype(str)
    fig = px.line(
        frame,
        x="time_s",
        y=column,
        color="unit",
        title=f"{column} per unit",
        labels={"time_s": "time (s)"},
    )
    return fig


def confusion_heatmap(report: pd.DataFrame) -> go.Figure:
    """Heatmap of the row percentages of a matrix report."""
    rows = report[report["actual_id"].astype(str).str.isdigit()]
    predicted = [c for c in report.columns if str(c).isdigit()]
    values = rows[predicted].astype(float).to_numpy()
    fig = px.imshow(
        values,
        x=[str(c) for c in predicted],
        y=rows["actual_id"].astype(str).tolist(),
        text_auto=".1f",
        color_continuous_scale="Blues",
        labels={"x": "predicted", "y": "actual", "color": "%"},
        title="Confusion matrix (row %)",
    )
    return fig
