"""
Streamlit viewer for palm haptics traces
Loads CSV files written by the palm-haptics CLI and plots them
"""
import streamlit as st
import pandas as pd

from src.utils.figures import confusion_heatmap, device_trace_figure, impedance_figure
from src.utils.trace_validator import TraceValidator


def configure_page():
    """Configure Streamlit page settings"""
    st.set_page_config(
        page_title="Palm Haptics Trace Viewer",
        page_icon="🖐️",
        layout="wide",
        initial_sidebar_state="expanded"
    )

    st.title("🖐️ Palm Haptics Trace Viewer")
    st.markdown("---")


@st.cache_data
def load_csv(data: bytes) -> pd.DataFrame:
    """Parse an uploaded CSV."""
    from io import BytesIO
    return pd.read_csv(BytesIO(data))


def sidebar_controls():
    """Create sidebar upload and options"""
    st.sidebar.header("📂 Trace Files")
    uploaded = st.sidebar.file_uploader("CSV written by palm-haptics", type=["csv"])

    if st.sidebar.button("🧹 Clear Cache"):
        st.cache_data.clear()
        st.rerun()

    return uploaded


def display_impedance(frame: pd.DataFrame):
    """Commanded vs actual contact height"""
    st.header("📈 Impedance Rendering")
    col1, col2, col3 = st.columns(3)
    with col1:
        st.metric("Samples", f"{len(frame):,}")
    with col2:
        st.metric("Peak force", f"{frame['force_n'].max():.3f} N")
    with col3:
        st.metric("Final commanded y", f"{frame['commanded_y_mm'].iloc[-1]:.2f} mm")
    st.plotly_chart(impedance_figure(frame), use_container_width=True)


def display_device(frame: pd.DataFrame):
    """Per-unit device trace"""
    st.header("🤖 Device Trace")
    column = st.selectbox("Column", ["force_n", "act_y_mm", "cmd_y_mm", "act_x_mm"], index=0)
    st.plotly_chart(device_trace_figure(frame, column), use_container_width=True)

    peaks = frame.groupby("unit")["force_n"].max().reset_index()
    peaks.columns = ["unit", "peak_force_n"]
    st.dataframe(peaks, use_container_width=True)


def display_matrix(frame: pd.DataFrame):
    """Confusion matrix report"""
    st.header("🧮 Confusion Matrix")
    summary = frame[~frame["actual_id"].astype(str).str.isdigit()]
    cols = st.columns(max(len(summary), 1))
    for col, (_, row) in zip(cols, summary.iterrows()):
        with col:
            st.metric(f"{row['actual_id'].capitalize()} recognition", f"{row['recognition_pct']:.1f}%")
    st.plotly_chart(confusion_heatmap(frame), use_container_width=True)
    st.dataframe(frame, use_container_width=True)


def main():
    """Main application function"""
    configure_page()
    uploaded = sidebar_controls()

    if uploaded is None:
        st.info("Upload an impedance trace, device trace or matrix report to begin.")
        return

    try:
        frame = load_csv(uploaded.getvalue())
    except Exception as e:
        st.error(f"❌ Could not read {uploaded.name}: {str(e)}")
        return

    validator = TraceValidator()
    kind = validator.detect_kind(frame)
    if kind is None:
        st.error(f"❌ {uploaded.name} does not match any known trace schema")
        st.write(f"**Columns**: {', '.join(map(str, frame.columns))}")
        return

    st.success(f"✅ {uploaded.name}: {kind.replace('_', ' ')} with {len(frame):,} rows")
    if frame.empty:
        st.warning("⚠️ The file has a header but no rows")
        return

    if kind == "impedance_trace":
        display_impedance(frame)
    elif kind == "device_trace":
        display_device(frame)
    elif kind == "matrix_report":
        display_matrix(frame)
    else:
        st.dataframe(frame, use_container_width=True)


if __name__ == "__main__":
    main()
