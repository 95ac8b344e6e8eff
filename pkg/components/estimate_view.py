import math

import streamlit as st
import pandas as pd
import plotly.graph_objects as go

from utils.results_loader import reports_by_method
from utils.styling import card, create_plotly_template, info_banner, kpi_metric, method_color, stat_row


def build_draws_figure(draws, reports):
    """Overlaid histograms of each method's draws with its interval bounds

    ``draws`` has one column per method (posterior or bootstrap draws,
    NaN-padded); ``reports`` maps method to its estimate_report entry.
    """
    fig = go.Figure()
    for method in draws.columns:
        values = draws[method].dropna()
        if values.empty:
            continue
        color = method_color(method)
        fig.add_trace(go.Histogram(
            x=values,
            name=method,
            opacity=0.55,
            marker_color=color,
            histnorm="probability density",
            nbinsx=40,
        ))
        report = reports.get(method)
        if report is None:
            continue
        for bound in report["interval"]:
            if bound is not None and math.isfinite(bound):
                fig.add_vline(x=bound, line_dash="dash", line_color=color, line_width=1)
        fig.add_vline(x=report["point"], line_color=color, line_width=2)

    fig.update_layout(
        template=create_plotly_template(),
        barmode="overlay",
        title="Draws of the population mean",
        xaxis_title="Population mean",
        yaxis_title="Density",
        height=420,
    )
    return fig


def estimates_table(reports):
    rows = []
    for method, report in reports.items():
        lower, upper = report["interval"]
        rows.append({
            "Method": method,
            "Estimate": report["point"],
            "Lower": lower,
            "Upper": upper,
            "Length": upper - lower,
            "SE": report["se"],
            "Interval": report["interval_kind"],
            "Draws": report["n_draws"],
        })
    return pd.DataFrame(rows)


def show_estimates(results):
    """Estimate reports, draw histograms and sampler diagnostics"""
    st.header("Estimates")

    reports = reports_by_method(results)
    if not reports:
        info_banner("No estimate_report.json in this directory. Run `python -m gppp estimate` first.")
        return

    header = results["estimate_report"]
    col1, col2, col3 = st.columns(3)
    with col1:
        st.markdown(kpi_metric("Population size N", f"{header['N']:,}"), unsafe_allow_html=True)
    with col2:
        st.markdown(kpi_metric("Non-probability sample", f"{header['n_A']:,}", note="n_A"), unsafe_allow_html=True)
    with col3:
        st.markdown(kpi_metric("Reference sample", f"{header['n_R']:,}", note="n_R"), unsafe_allow_html=True)

    st.markdown("<hr/>", unsafe_allow_html=True)

    table = estimates_table(reports)
    st.dataframe(table.style.format({c: "{:.4f}" for c in ("Estimate", "Lower", "Upper", "Length", "SE")}),
                 use_container_width=True, hide_index=True)

    draws = results.get("draws")
    if draws is not None and not draws.empty:
        selected = st.multiselect("Methods", list(draws.columns), default=list(draws.columns))
        if selected:
            st.plotly_chart(build_draws_figure(draws[selected], reports), use_container_width=True)

    sampler = results.get("diagnostics") or {}
    bayesian = {m: d for m, d in sampler.items() if isinstance(d, dict) and "accept_rate" in d}
    if bayesian:
        st.subheader("Sampler")
        columns = st.columns(len(bayesian))
        for column, (method, diag) in zip(columns, bayesian.items()):
            # per-chain lists
            rows = "".join([
                stat_row("Chains", diag["chains"]),
                stat_row("Acceptance rate", " / ".join(f"{a:.3f}" for a in diag["accept_rate"])),
                stat_row("Divergences", sum(diag["divergences"])),
                stat_row("Step size", " / ".join(f"{s:.3g}" for s in diag["step_size"])),
                stat_row("Max split R-hat", f"{diag['max_split_rhat']:.3f}"),
                stat_row("Gradient evaluations", f"{sum(diag['gradient_evals']):,}"),
            ])
            with column:
                st.markdown(card(method, rows), unsafe_allow_html=True)

    failure = sampler.get("failure")
    if failure:
        st.error(f"Run failed: {failure.get('message', 'unknown error')}")
