"""
Streamlit Frontend for the Tree Planting Optimizer
Upload a ZIP with study area rasters and a meteo CSV, download the optimized placement bundle
"""

import io
import os
import shutil
import tempfile
import zipfile
from datetime import datetime

import pandas as pd
import streamlit as st

from master_pipeline import METHODS, PERIOD_ALIASES
from study_area import RASTER_FILES
from tree_planting_backend import TreePlantingPipeline

st.set_page_config(page_title="Tree Planting Optimizer", page_icon="🌳", layout="wide")

st.title("🌳 Tree Planting Optimizer")
st.caption("Place k trees where they lower the mean radiant temperature (Tmrt) of the area the most, "
           "averaged over the chosen period.")

with st.sidebar:
    st.header("📋 Input")
    st.markdown(
        "One ZIP holding the six rasters "
        + ", ".join(f"`{name}`" for name in sorted(RASTER_FILES.values()))
        + " (ESRI ASCII, 1 m cells), an optional `location.txt` and an hourly `meteo.csv`."
    )

    st.header("🌳 Trees")
    k = st.number_input("Number of trees", min_value=1, max_value=500, value=10)
    tree_height = st.number_input("Tree height (m)", min_value=2.0, max_value=40.0, value=12.0, step=0.5)
    crown_diameter = st.number_input("Crown diameter (m)", min_value=1.0, max_value=30.0, value=9.0, step=1.0)

    st.header("🔎 Search")
    method = st.selectbox("Method", METHODS, index=0)
    period = st.selectbox("Period", list(PERIOD_ALIASES), index=0,
                          help="day and week pick the hottest complete calendar day or week")
    iterations = st.number_input("ILS iterations", min_value=1, max_value=50, value=5)
    bins = st.selectbox("Sun bins (azimuth x elevation)", ['36x9', '18x6', '12x3'], index=0,
                        help="Coarser bins run faster and approximate shadows more roughly")
    seed = st.number_input("Random seed", min_value=0, value=0)

uploaded_file = st.file_uploader("Study area and meteo ZIP", type=['zip'],
                                 help="Sub-folders are fine; the first folder holding all six rasters is used")

if uploaded_file is None:
    st.info("👆 Upload a ZIP file to begin")
    st.stop()

st.write(f"📦 **{uploaded_file.name}** ({uploaded_file.size / 1024:.1f} KB)")

if st.button("🚀 Optimize Placement", type="primary"):
    work_dir = tempfile.mkdtemp()
    try:
        with st.spinner("📂 Unpacking..."):
            extract_dir = os.path.join(work_dir, "inputs")
            with zipfile.ZipFile(io.BytesIO(uploaded_file.getvalue())) as archive:
                archive.extractall(extract_dir)

        with st.spinner("🔄 Building sun bins and searching tree positions..."):
            result = TreePlantingPipeline(
                input_dir=extract_dir,
                output_dir=os.path.join(work_dir, "result"),
                k=int(k),
                method=method,
                period=period,
                seed=int(seed),
                ils_iterations=int(iterations),
                bins=bins,
                tree_height=float(tree_height),
                crown_diameter=float(crown_diameter),
            ).run()

        if not result['success']:
            st.error(f"❌ {result['error']}")
            st.stop()

        stats = result['stats']
        st.success(f"✅ {stats['trees']} trees placed in {stats['processing_time']:.1f} s")
        baseline, optimized, reduction = st.columns(3)
        baseline.metric("Baseline mean Tmrt", f"{stats['baseline_tmrt']:.2f} °C")
        optimized.metric("Optimized mean Tmrt", f"{stats['optimized_tmrt']:.2f} °C",
                         delta=f"{-stats['reduction_K']:.3f} K", delta_color="inverse")
        reduction.metric("Period", stats['period'], help=f"{stats['records']} records, {stats['sun_bins']} sun bins")

        with open(result['output_path'], 'rb') as f:
            bundle = f.read()
        with zipfile.ZipFile(io.BytesIO(bundle)) as archive:
            placement = pd.read_csv(archive.open('placement.csv'))
        st.subheader("📍 Tree positions")
        st.dataframe(placement, hide_index=True)

        st.download_button(
            label="📥 Download Result Bundle",
            data=bundle,
            file_name=f"tree_planting_{datetime.now():%Y%m%d_%H%M%S}.zip",
            mime="application/zip",
            type="primary",
        )
    finally:
        shutil.rmtree(work_dir, ignore_errors=True)
