"""
Sample plots of run_chain outputs.

    python docs/plot_figures.py results/ensemble results/tli results/defect

Each argument is an output directory; every recognised CSV in it is drawn
and saved as an HTML figure next to it.
"""
import os
import sys

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go


def plot_ensemble(path: str) -> go.Figure:
    df = pd.read_csv(path)
    fig = go.Figure()
    for (threshold, n_sites), group in df.groupby(["threshold", "N"]):
        fig.add_trace(go.Scatter(
            x=group["mu_over_N"],
            y=group["p"],
            error_y=dict(type="data", array=group["p_err"]),
            mode="lines+markers",
            name=f"p, N={n_sites}, L_th={threshold}",
        ))
        fig.add_trace(go.Scatter(
            x=group["mu_over_N"],
            y=group["rho_mean"],
            error_y=dict(type="data", array=group["rho_stderr"]),
            mode="lines+markers",
            line=dict(dash="dot"),
            name=f"rho, N={n_sites}, L_th={threshold}",
        ))
    fig.update_layout(
        xaxis_title="mu / N",
        yaxis_title="p, rho",
        template="plotly_white",
    )
    return fig


def plot_tli(path: str) -> go.Figure:
    df = pd.read_csv(path)
    fig = go.Figure()
    for n_sites, group in df.groupby("N"):
        fig.add_trace(go.Scatter(
            x=group["mu_over_N"], y=group["mean_mc_over_N"],
            mode="lines+markers", name=f"m_c / N, N={n_sites}",
        ))
    fig.update_layout(xaxis_title="mu / N", yaxis_title="m_c / N", template="plotly_white")
    return fig


def plot_levels(path: str) -> go.Figure:
    df = pd.read_csv(path)
    fig = px.line(df, x="mu_over_N", y="mean_r", color="N", markers=True,
                  error_y="stderr", template="plotly_white")
    fig.add_hline(y=0.536, line_dash="dash", annotation_text="GOE")
    fig.add_hline(y=0.386, line_dash="dash", annotation_text="Poisson")
    return fig


def plot_defect_return(path: str) -> go.Figure:
    df = pd.read_csv(path)
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=df["time"], y=df["L_clean"], mode="lines", name="PXP"))
    fig.add_trace(go.Scatter(x=df["time"], y=df["L_defect"], mode="lines", name="defect"))
    fig.update_layout(xaxis_title="t", yaxis_title="L(t)", template="plotly_white")
    return fig


def plot_defect_overlaps(path: str) -> go.Figure:
    df = pd.read_csv(path)
    fig = px.scatter(df, x="energy", y="overlap", color="model", log_y=True,
                     template="plotly_white")
    return fig


def plot_defect_density(path: str) -> go.Figure:
    df = pd.read_csv(path).set_index("site")
    fig = px.imshow(df.to_numpy(), x=[float(c) for c in df.columns], y=df.index,
                    aspect="auto", labels=dict(x="t", y="site", color="n_i"))
    fig.update_layout(height=400, template="plotly_white")
    return fig


PLOTTERS = {
    "ensemble.csv": plot_ensemble,
    "tli.csv": plot_tli,
    "levels.csv": plot_levels,
    "defect_return.csv": plot_defect_return,
    "defect_overlaps.csv": plot_defect_overlaps,
    "defect_density.csv": plot_defect_density,
}


def main(directories):
    for directory in directories:
        for name, plotter in PLOTTERS.items():
            path = os.path.join(directory, name)
            if not os.path.exists(path):
                continue
            target = path.replace(".csv", ".html")
            plotter(path).write_html(target)
            print(f"Wrote {target}")


if __name__ == "__main__":
    main(sys.argv[1:] or ["results"])
