import streamlit as st
import plotly.graph_objects as go

from utils.styling import card, create_plotly_template, info_banner, kpi_metric, stat_row, warning_banner

SAMPLE_COLORS = {"S_A": "#1e88e5", "S_R": "#dc3545"}


def build_overlap_figure(diagnostics):
    """Quantile curves of log pseudo-inclusion probability, one per sample"""
    overlap = diagnostics["overlap"]
    probs = [100.0 * q for q in overlap["quantiles"]]
    fig = go.Figure()
    for sample in ("S_A", "S_R"):
        fig.add_trace(go.Scatter(
            x=probs,
            y=overlap[sample],
            mode="lines+markers",
            name=sample,
            line=dict(color=SAMPLE_COLORS[sample], width=2),
        ))
    fig.update_layout(
        template=create_plotly_template(),
        title="Overlap of log pseudo-inclusion probabilities",
        xaxis_title="Quantile (%)",
        yaxis_title="log π̂_A",
        height=400,
    )
    return fig


def show_diagnostics(results):
    """Positivity, pseudo-weight and smoother diagnostics"""
    st.header("Diagnostics")

    diagnostics = results.get("diagnostics") or {}
    if "overlap" not in diagnostics:
        info_banner("No propensity diagnostics here. Run `python -m gppp diagnose` first.")
        return

    weights = diagnostics["pseudo_weights"]
    overlap = diagnostics["overlap"]
    outside = overlap["S_R_below_S_A_min"] + overlap["S_R_above_S_A_max"]

    col1, col2, col3 = st.columns(3)
    with col1:
        st.markdown(kpi_metric("Pseudo-weight outliers", f"{weights['count']} / {weights['n']}",
                               note=weights["rule"], flagged=weights["count"] > 0), unsafe_allow_html=True)
    with col2:
        st.markdown(kpi_metric("Max / min weight", f"{weights['weight_ratio_max_min']:.1f}"),
                    unsafe_allow_html=True)
    with col3:
        st.markdown(kpi_metric("S_R outside S_A range", outside, flagged=outside > 0),
                    unsafe_allow_html=True)

    if diagnostics.get("clamped_count"):
        warning_banner(f"{diagnostics['clamped_count']} pseudo-inclusion probabilities were clamped to 1.")

    st.plotly_chart(build_overlap_figure(diagnostics), use_container_width=True)

    smoother = diagnostics.get("smoother")
    if smoother:
        effective = smoother["effective_matches"]
        pooled = smoother["pooled_pseudo_weights"]
        left, right = st.columns(2)
        with left:
            st.markdown(card("Kernel smoother", "".join([
                stat_row("Row sums", f"{smoother['row_sum_min']:.3f} to {smoother['row_sum_max']:.3f}"),
                stat_row("Effective matches (median)", f"{effective['median']:.1f}"),
                stat_row("Effective matches (min)", f"{effective['min']:.1f}"),
            ])), unsafe_allow_html=True)
        with right:
            st.markdown(card("Pooled pseudo-weights", "".join([
                stat_row("Total", f"{pooled['total']:,.1f}"),
                stat_row("Median", f"{pooled['median']:.2f}"),
                stat_row("Max", f"{pooled['max']:.2f}"),
                stat_row("Outliers", pooled["outliers"]),
            ])), unsafe_allow_html=True)
