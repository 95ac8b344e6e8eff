import streamlit as st
import plotly.graph_objects as go

METHOD_COLORS = {
    "GPPP": "#1e88e5",
    "LWP": "#9c27b0",
    "PM": "#00bcd4",
    "AIPW": "#28a745",
    "PAPP": "#ffc107",
    "UW": "#6c757d",
    "UW_A": "#6c757d",
    "FW_A": "#adb5bd",
    "UW_R": "#dc3545",
    "FW_R": "#e57373",
}

PAGES = {
    "Estimates": "📐",
    "Simulation": "🎲",
    "Diagnostics": "🩺",
}


def apply_custom_styling():
    """Apply the viewer's CSS to the whole page"""
    st.markdown("""
    <style>
    :root { --gppp-blue: #1e88e5; --gppp-amber: #ffc107; --gppp-red: #dc3545; --gppp-muted: #6c757d; --gppp-rule: #dee2e6; }
    .main .block-container { padding-top: 0.75rem; max-width: 98%; }
    .stApp { background-color: #f8f9fa; color: #212529; font-size: 0.9rem; }
    h2 { font-size: 1.4rem; border-bottom: 1px solid var(--gppp-rule); padding-bottom: 0.5rem; }
    .card, .kpi-container, .app-header { background: #ffffff; border-radius: 6px; border-top: 3px solid var(--gppp-blue); padding: 0.9rem 1.1rem; margin-bottom: 1rem; box-shadow: 0 1px 6px rgba(0,0,0,0.05); }
    .card-title, .kpi-title { color: var(--gppp-muted); font-size: 0.75rem; text-transform: uppercase; letter-spacing: 0.5px; font-weight: 600; margin-bottom: 0.5rem; }
    .kpi-value { font-size: 1.6rem; font-weight: 700; line-height: 1.1; margin-bottom: 0.3rem; }
    .kpi-note, .app-subtitle { color: var(--gppp-muted); font-size: 0.75rem; }
    .kpi-note.flag { color: var(--gppp-red); font-weight: 600; }
    .app-title { color: var(--gppp-blue); font-size: 1.4rem; font-weight: 700; margin: 0; }
    .info-banner, .warning-banner, .error-banner { border-radius: 6px; padding: 0.6rem 1rem; margin-bottom: 1rem; font-size: 0.85rem; }
    .info-banner { background-color: #e3f2fd; border-left: 3px solid var(--gppp-blue); }
    .warning-banner { background-color: #fff3cd; border-left: 3px solid var(--gppp-amber); }
    .error-banner { background-color: #f8d7da; border-left: 3px solid var(--gppp-red); }
    .stat-row { display: flex; justify-content: space-between; padding: 0.5rem 0; border-bottom: 1px solid var(--gppp-rule); font-size: 0.85rem; }
    .stat-row:last-child { border-bottom: none; }
    .stat-value { color: var(--gppp-blue); font-weight: 600; }
    </style>
    """, unsafe_allow_html=True)


def kpi_metric(title, value, note="", flagged=False):
    """HTML for a headline number with an optional note underneath"""
    note_class = "kpi-note flag" if flagged else "kpi-note"
    return f"""
    <div class="kpi-container">
        <div class="kpi-title">{title}</div>
        <div class="kpi-value">{value}</div>
        <div class="{note_class}">{note}</div>
    </div>
    """


def card(title, content):
    return f"""
    <div class="card">
        <div class="card-title">{title}</div>
        <div class="card-content">{content}</div>
    </div>
    """


def _banner(kind, label, message):
    return st.markdown(f'<div class="{kind}-banner"><strong>{label}:</strong> {message}</div>',
                       unsafe_allow_html=True)


def info_banner(message):
    return _banner("info", "Info", message)


def warning_banner(message):
    return _banner("warning", "Warning", message)


def error_banner(message):
    return _banner("error", "Error", message)


def stat_row(label, value):
    return f"""
    <div class="stat-row">
        <div class="stat-label">{label}</div>
        <div class="stat-value">{value}</div>
    </div>
    """


def display_header(subtitle):
    """Header strip naming the viewer and the results directory in view"""
    st.markdown(f"""
    <div class="app-header">
        <h1 class="app-title">GPPP Results Viewer</h1>
        <div class="app-subtitle">{subtitle}</div>
    </div>
    """, unsafe_allow_html=True)


def create_sidebar(default_directory="results"):
    """Sidebar with the results directory input and page selector

    Returns (directory, page).
    """
    st.sidebar.markdown("### Results")
    directory = st.sidebar.text_input("Output directory", value=default_directory,
                                      help="Directory written by `python -m gppp ...`")
    labels = [f"{icon} {page}" for page, icon in PAGES.items()]
    choice = st.sidebar.radio("Page", labels, index=0)
    page = list(PAGES)[labels.index(choice)]
    return directory, page


def create_footer(version=""):
    st.markdown(f"""
    <div style="margin-top: 40px; padding: 16px; border-top: 1px solid #e9ecef; text-align: center; color: #6c757d; font-size: 0.8rem;">
        Read-only view of CLI artifacts{f" | gppp {version}" if version else ""}
    </div>
    """, unsafe_allow_html=True)


def method_color(method):
    return METHOD_COLORS.get(method, "#455a64")


def create_plotly_template():
    """Shared Plotly template for every viewer chart"""
    template = go.layout.Template()
    template.layout = go.Layout(
        font=dict(family="'Segoe UI', Roboto, 'Helvetica Neue', Arial, sans-serif", size=11, color="#212529"),
        paper_bgcolor="white",
        plot_bgcolor="white",
        colorway=list(dict.fromkeys(METHOD_COLORS.values())),
        xaxis=dict(showgrid=True, gridcolor="#f0f0f0", zeroline=False, showline=True, linecolor="#dee2e6"),
        yaxis=dict(showgrid=True, gridcolor="#f0f0f0", zeroline=False, showline=True, linecolor="#dee2e6"),
        margin=dict(l=40, r=10, t=40, b=40),
        hovermode="closest",
        legend=dict(orientation="h", yanchor="bottom", y=-0.25, xanchor="center", x=0.5, font=dict(size=10)),
    )
    return template
