import streamlit as st
import plotly.graph_objects as go

from utils.styling import create_plotly_template, info_banner, kpi_metric, method_color

METRICS = ("rBias", "rMSE", "crCI", "rlCI", "rSE")
METRIC_TITLES = {
    "rBias": "Relative bias (%)",
    "rMSE": "Relative RMSE (%)",
    "crCI": "Interval coverage (%)",
    "rlCI": "Mean interval length",
    "rSE": "SE / empirical SD",
}
REFERENCE_LINES = {"rBias": 0.0, "crCI": 95.0, "rSE": 1.0}


def build_metrics_figure(metrics, metric):
    """Grouped bars of one metric, one trace per method across scenarios

    rBias bars carry asymmetric error bars spanning the 2.5% and 97.5%
    percentiles of the replicate-level relative bias.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric '{metric}'; expected one of {METRICS}")
    has_scenarios = "scenario" in metrics.columns
    fig = go.Figure()
    for method, group in metrics.groupby("method", sort=False):
        x = group["scenario"] if has_scenarios else [method] * len(group)
        error_y = None
        if metric == "rBias" and {"bias_q025", "bias_q975"} <= set(group.columns):
            error_y = dict(
                type="data",
                symmetric=False,
                array=(group["bias_q975"] - group["rBias"]).clip(lower=0),
                arrayminus=(group["rBias"] - group["bias_q025"]).clip(lower=0),
                thickness=1.2,
            )
        fig.add_trace(go.Bar(
            x=x,
            y=group[metric],
            name=method,
            marker_color=method_color(method),
            error_y=error_y,
        ))

    if metric in REFERENCE_LINES:
        fig.add_hline(y=REFERENCE_LINES[metric], line_dash="dot", line_color="#6c757d")

    fig.update_layout(
        template=create_plotly_template(),
        barmode="group",
        title=METRIC_TITLES[metric],
        xaxis_title="Scenario" if has_scenarios else "Method",
        yaxis_title=metric,
        height=420,
    )
    return fig


def show_metrics(results):
    """Simulation metric table and per-metric charts"""
    st.header("Simulation")

    metrics = results.get("metrics")
    if metrics is None or metrics.empty:
        info_banner("No metrics.csv in this directory. Run `python -m gppp simulate` first.")
        return

    manifest = results.get("manifest") or {}
    col1, col2, col3 = st.columns(3)
    with col1:
        st.markdown(kpi_metric("Replications", int(metrics["K"].max())), unsafe_allow_html=True)
    with col2:
        failures = int(metrics["failures"].sum()) if "failures" in metrics else 0
        st.markdown(kpi_metric("Failed fits", failures, flagged=failures > 0), unsafe_allow_html=True)
    with col3:
        truth = manifest.get("population_mean")
        st.markdown(kpi_metric("Population mean", f"{truth:.4f}" if truth is not None else "n/a"),
                    unsafe_allow_html=True)

    scenarios = list(metrics["scenario"].unique()) if "scenario" in metrics else []
    if scenarios:
        chosen = st.multiselect("Scenarios", scenarios, default=scenarios)
        metrics = metrics[metrics["scenario"].isin(chosen)]

    tabs = st.tabs(list(METRICS))
    for tab, metric in zip(tabs, METRICS):
        with tab:
            st.plotly_chart(build_metrics_figure(metrics, metric), use_container_width=True)

    st.subheader("Metric table")
    st.dataframe(metrics, use_container_width=True, hide_index=True)

    replicates = results.get("replicates")
    if replicates is not None and "failed" in replicates:
        failed = replicates[replicates["failed"].astype(bool)]
        if not failed.empty:
            st.subheader("Failed replications")
            st.dataframe(failed, use_container_width=True, hide_index=True)
