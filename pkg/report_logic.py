"""
dashboard.py / ``report`` 서브커맨드에서 쓰는 순수 로직 함수들
Streamlit 의존성 없이 테스트 가능
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any

import pandas as pd

# 요약 표 컬럼 순서 = 표시 순서
SUMMARY_COLUMNS: tuple[str, ...] = (
    "report",
    "source",
    "profile",
    "alpha",
    "beta",
    "gamma",
    "k",
    "n_pixel",
    "n_semantic",
    "n_text",
    "total",
    "overhead_ratio",
    "final_objective",
)


def load_report(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_sweep(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, keep_default_na=True)


def summarize_report(name: str, report: dict[str, Any]) -> dict[str, Any]:
    """report JSON 한 개 → 요약 표의 한 행."""
    profile = report.get("selected_profile", {})
    budget = report.get("token_budget", {})
    cluster = report.get("cluster") or {}
    return {
        "report": name,
        "source": report.get("profile_source", "-"),
        "profile": profile.get("name") or "-",
        "alpha": profile.get("alpha"),
        "beta": profile.get("beta"),
        "gamma": profile.get("gamma"),
        "k": report.get("k", 0),
        "n_pixel": budget.get("n_pixel", 0),
        "n_semantic": budget.get("n_semantic", 0),
        "n_text": budget.get("n_text", 0),
        "total": budget.get("total", 0),
        "overhead_ratio": budget.get("overhead_ratio", 0.0),
        "final_objective": cluster.get("final_objective", math.nan),
    }


def reports_table(reports: dict[str, dict[str, Any]]) -> pd.DataFrame:
    rows = [summarize_report(name, rep) for name, rep in sorted(reports.items())]
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))


def distribution_frame(report: dict[str, Any]) -> pd.DataFrame:
    """profile 별 확률. fixed profile report 면 빈 표."""
    dist = report.get("distribution")
    if not dist:
        return pd.DataFrame(columns=["profile", "prob"])
    names = [
        p.get("name") or f"{p['alpha']}:{p['beta']}:{p['gamma']}"
        for p in dist["profiles"]
    ]
    return pd.DataFrame({"profile": names, "prob": dist["probs"]})


def objective_trace_frame(report: dict[str, Any]) -> pd.DataFrame:
    cluster = report.get("cluster") or {}
    trace = cluster.get("objective_trace", [])
    return pd.DataFrame({"iteration": range(len(trace)), "objective": trace})


def ari_pivot(sweep: pd.DataFrame) -> pd.DataFrame:
    """alpha × beta 격자의 평균 ARI (baseline 행 제외)."""
    cells = sweep[sweep["kind"] == "cell"]
    return cells.pivot_table(
        index="alpha", columns="beta", values="ari_mean", aggfunc="first"
    )


def best_cell_per_alpha(sweep: pd.DataFrame) -> pd.DataFrame:
    """alpha 마다 ARI 가 가장 높은 cell (동률이면 먼저 나온 cell)."""
    cells = sweep[sweep["kind"] == "cell"].sort_values(["alpha", "cell"])
    idx = cells.groupby("alpha")["ari_mean"].idxmax()
    return cells.loc[idx].reset_index(drop=True)


def markdown_table(frame: pd.DataFrame) -> str:
    """DataFrame → pipe 형식 markdown 표. float 은 4 유효숫자, NaN 은 '-'."""
    cleaned = frame.astype(object).where(frame.notna(), None)
    return cleaned.to_markdown(index=False, floatfmt=".4g", missingval="-")


def render_markdown(
    reports: dict[str, dict[str, Any]] | None = None,
    sweep: pd.DataFrame | None = None,
) -> str:
    sections: list[str] = []
    if reports:
        sections.append("## Pipeline reports\n")
        sections.append(markdown_table(reports_table(reports)))
        for name, rep in sorted(reports.items()):
            dist = distribution_frame(rep)
            if not dist.empty:
                sections.append(f"\n### {name}: granularity distribution\n")
                sections.append(markdown_table(dist))
    if sweep is not None and not sweep.empty:
        sections.append("\n## Sweep\n")
        sections.append(markdown_table(sweep))
        if (sweep["kind"] == "cell").any():
            sections.append("\n### Best cell per alpha\n")
            best = best_cell_per_alpha(sweep)[["alpha", "beta", "ari_mean"]]
            sections.append(markdown_table(best))
    return "\n".join(sections) + "\n"
