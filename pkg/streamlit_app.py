import streamlit as st
from components.estimate_view import show_estimates
from components.metrics_view import show_metrics
from components.diagnostics_view import show_diagnostics
from gppp import __version__
from utils.results_loader import load_results
from utils.styling import apply_custom_styling, display_header, create_sidebar, create_footer, error_banner

st.set_page_config(
    page_title="GPPP Results Viewer",
    page_icon="📐",
    layout="wide",
    initial_sidebar_state="expanded"
)

apply_custom_styling()

PAGE_HANDLERS = {
    "Estimates": show_estimates,
    "Simulation": show_metrics,
    "Diagnostics": show_diagnostics,
}

directory, selected_page = create_sidebar()
display_header(f"Results directory: {directory}")

try:
    results = load_results(directory)
except FileNotFoundError as e:
    error_banner(str(e))
    st.info("Point the sidebar at a directory written by `python -m gppp estimate|simulate|diagnose`.")
else:
    manifest = results.get("manifest")
    if manifest:
        st.sidebar.markdown("---")
        st.sidebar.markdown(f"**Seed:** {manifest.get('seed')}  \n"
                            f"**Status:** {manifest.get('status')}  \n"
                            f"**Version:** {manifest.get('version')}")
    try:
        PAGE_HANDLERS[selected_page](results)
    except (KeyError, TypeError, ValueError) as e:
        st.error(f"Error rendering {selected_page}: {str(e)}")
        st.info("The artifacts may come from an incompatible run. Re-run the CLI into a fresh directory.")

create_footer(__version__)
