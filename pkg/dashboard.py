"""
파이프라인 report / sweep 결과 대시보드

    streamlit run dashboard.py
"""

from __future__ import annotations

import io
import json

import pandas as pd
import streamlit as st

from report_logic import (
    ari_pivot,
    best_cell_per_alpha,
    distribution_frame,
    objective_trace_frame,
    reports_table,
)


def show_reports(reports: dict) -> None:
    st.subheader("Pipeline reports")
    st.dataframe(reports_table(reports), use_container_width=True, hide_index=True)

    name = st.selectbox("Report", sorted(reports))
    if not name:
        return
    report = reports[name]
    col1, col2 = st.columns(2)
    with col1:
        dist = distribution_frame(report)
        if dist.empty:
            st.info("fixed profile: controller 분포 없음")
        else:
            st.caption("Granularity distribution")
            st.bar_chart(dist, x="profile", y="prob")
    with col2:
        trace = objective_trace_frame(report)
        if trace.empty:
            st.info("semantic branch 꺼짐: clustering 없음")
        else:
            st.caption("Clustering objective")
            st.line_chart(trace, x="iteration", y="objective")

    with st.expander("Effective config"):
        st.json(report.get("config", {}))


def show_sweep(sweep: pd.DataFrame) -> None:
    st.subheader("Granularity sweep")
    st.dataframe(sweep, use_container_width=True, hide_index=True)
    if (sweep["kind"] == "cell").any():
        st.caption("Mean ARI (alpha × beta)")
        st.dataframe(ari_pivot(sweep), use_container_width=True)
        st.caption("Best beta per alpha")
        st.dataframe(best_cell_per_alpha(sweep), hide_index=True)


def main() -> None:
    st.set_page_config(page_title="Granularity reports", page_icon="🧩", layout="wide")
    st.title("🧩 Granularity pipeline reports")

    report_files = st.file_uploader(
        "Pipeline report JSON", type=["json"], accept_multiple_files=True
    )
    sweep_file = st.file_uploader("Sweep CSV", type=["csv"])

    reports = {f.name: json.loads(f.getvalue().decode("utf-8")) for f in report_files or []}
    if reports:
        show_reports(reports)
    if sweep_file is not None:
        show_sweep(pd.read_csv(io.BytesIO(sweep_file.getvalue())))
    if not reports and sweep_file is None:
        st.info("report JSON 또는 sweep CSV 를 올려주세요.")


if __name__ == "__main__":
    main()
