"""Machine-readable results (CSV) and figure analogs as standalone SVG.

The CSV is the source of truth; plots are derived from aggregated values
and never read back. All outputs are byte-deterministic: fixed margins,
fixed palettes, fixed float formatting (6 significant digits in CSVs,
2 decimals for SVG geometry).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .metrics import aggregate

METRICS_HEADER = "strategy,pi_u,pi_t,repetition,cycle,cumulative_pct,f1_defect,faulty_selected_fraction"
UNIQUENESS_HEADER = "strategy,pi_u,pi_t,cycle,us,b,R"

PALETTE = {
    "random": "#1f77b4",
    "entropy": "#d62728",
    "coreset": "#2ca02c",
}


def fmt(value) -> str:
    """6-significant-digit decimal formatting for CSV cells."""
    if isinstance(value, bool):
        raise TypeError("booleans have no CSV representation here")
    if isinstance(value, int):
        return str(value)
    return format(float(value), ".6g")


@dataclass(frozen=True)
class MetricsRow:
    strategy: str
    pi_u: float
    pi_t: float
    repetition: int
    cycle: int
    cumulative_pct: float
    f1_defect: float
    faulty_selected_fraction: float

    def sort_key(self):
        return (self.strategy, self.pi_u, self.pi_t, self.repetition, self.cycle)


def metrics_rows(strategy: str, pi_u: float, pi_t: float, pool_size: int, budget: int, records) -> list[MetricsRow]:
    """Rows for one experiment's CycleRecords."""
    return [
        MetricsRow(
            strategy=strategy,
            pi_u=pi_u,
            pi_t=pi_t,
            repetition=r.repetition,
            cycle=r.cycle,
            cumulative_pct=100.0 * r.cumulative_labeled / pool_size,
            f1_defect=r.f1_defect,
            faulty_selected_fraction=r.faulty_selected_fraction,
        )
        for r in records
    ]


def write_metrics_csv(rows, path: str | Path) -> None:
    rows = sorted(rows, key=lambda r: r.sort_key())
    if not rows:
        raise ValueError("no records to write")
    lines = [METRICS_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [
                    r.strategy,
                    fmt(r.pi_u),
                    fmt(r.pi_t),
                    str(r.repetition),
                    str(r.cycle),
                    fmt(r.cumulative_pct),
                    fmt(r.f1_defect),
                    fmt(r.faulty_selected_fraction),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics_csv(path: str | Path) -> list[MetricsRow]:
    text = Path(path).read_text().strip().split("\n")
    if not text or text[0] != METRICS_HEADER:
        raise ValueError(f"{path}: unexpected header {text[:1]}")
    rows = []
    for line in text[1:]:
        parts = line.split(",")
        if len(parts) != 8:
            raise ValueError(f"{path}: malformed row {line!r}")
        rows.append(
            MetricsRow(
                strategy=parts[0],
                pi_u=float(parts[1]),
                pi_t=float(parts[2]),
                repetition=int(parts[3]),
                cycle=int(parts[4]),
                cumulative_pct=float(parts[5]),
                f1_defect=float(parts[6]),
                faulty_selected_fraction=float(parts[7]),
            )
        )
    return rows


@dataclass(frozen=True)
class UniquenessRow:
    strategy: str
    pi_u: float
    pi_t: float
    cycle: int
    us: float
    b: int
    R: int

    def sort_key(self):
        return (self.strategy, self.pi_u, self.pi_t, self.cycle)


def write_uniqueness_csv(rows, path: str | Path) -> None:
    rows = sorted(rows, key=lambda r: r.sort_key())
    lines = [UNIQUENESS_HEADER]
    for r in rows:
        lines.append(
            ",".join(
                [r.strategy, fmt(r.pi_u), fmt(r.pi_t), str(r.cycle), fmt(r.us), str(r.b), str(r.R)]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_uniqueness_csv(path: str | Path) -> list[UniquenessRow]:
    text = Path(path).read_text().strip().split("\n")
    if not text or text[0] != UNIQUENESS_HEADER:
        raise ValueError(f"{path}: unexpected header {text[:1]}")
    rows = []
    for line in text[1:]:
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"{path}: malformed row {line!r}")
        rows.append(
            UniquenessRow(
                strategy=parts[0],
                pi_u=float(parts[1]),
                pi_t=float(parts[2]),
                cycle=int(parts[3]),
                us=float(parts[4]),
                b=int(parts[5]),
                R=int(parts[6]),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# SVG rendering


@dataclass(frozen=True)
class SeriesPoint:
    x: float
    mean: float
    q1: float
    q3: float

    def __post_init__(self):
        if not self.q1 <= self.q3:
            raise ValueError(f"band bounds out of order: q1={self.q1} > q3={self.q3}")


def aggregate_series(rows, value_attr: str, x_attr: str = "cumulative_pct") -> dict[str, list[SeriesPoint]]:
    """Per-strategy mean/Q1/Q3 series over (strategy, cycle) groups."""
    groups: dict[tuple[str, int], list[MetricsRow]] = {}
    for r in rows:
        groups.setdefault((r.strategy, r.cycle), []).append(r)
    series: dict[str, list[SeriesPoint]] = {}
    for (strategy, _cycle), grp in sorted(groups.items()):
        stats = aggregate(sorted(getattr(g, value_attr) for g in grp))
        xs = {getattr(g, x_attr) for g in grp}
        if len(xs) != 1:
            raise ValueError(f"inconsistent x values in group {strategy}: {sorted(xs)}")
        series.setdefault(strategy, []).append(
            SeriesPoint(x=xs.pop(), mean=stats["mean"], q1=stats["q1"], q3=stats["q3"])
        )
    return series


class _Svg:
    """Deterministic SVG string builder with a fixed coordinate style."""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        ]

    @staticmethod
    def pt(v: float) -> str:
        return f"{v:.2f}"

    def line(self, x1, y1, x2, y2, stroke="#333333", width=1.0, dash: str | None = None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{self.pt(x1)}" y1="{self.pt(y1)}" x2="{self.pt(x2)}" y2="{self.pt(y2)}" '
            f'stroke="{stroke}" stroke-width="{width}"{d}/>'
        )

    def polyline(self, points, stroke, width=1.5):
        pts = " ".join(f"{self.pt(x)},{self.pt(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width}"/>'
        )

    def polygon(self, points, fill, opacity=0.18):
        pts = " ".join(f"{self.pt(x)},{self.pt(y)}" for x, y in points)
        self.parts.append(f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}"/>')

    def text(self, x, y, s, size=11, anchor="start", fill="#222222"):
        self.parts.append(
            f'<text x="{self.pt(x)}" y="{self.pt(y)}" font-family="Helvetica,Arial,sans-serif" '
            f'font-size="{size}" text-anchor="{anchor}" fill="{fill}">{s}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


@dataclass(frozen=True)
class PanelGeometry:
    left: float = 62.0
    right: float = 150.0
    top: float = 36.0
    bottom: float = 46.0
    width: float = 620.0
    height: float = 330.0


def _axes(svg: _Svg, geom: PanelGeometry, y0: float, x_range, y_range, title, x_label, y_label, x_ticks, y_ticks):
    gx0, gy0 = geom.left, y0 + geom.top
    gw = geom.width - geom.left - geom.right
    gh = geom.height - geom.top - geom.bottom
    x_min, x_max = x_range
    y_min, y_max = y_range

    def sx(x):
        span = (x_max - x_min) or 1.0
        return gx0 + (x - x_min) / span * gw

    def sy(y):
        span = (y_max - y_min) or 1.0
        return gy0 + gh - (y - y_min) / span * gh

    svg.text(gx0 + gw / 2, y0 + 16, title, size=13, anchor="middle")
    svg.line(gx0, gy0 + gh, gx0 + gw, gy0 + gh)
    svg.line(gx0, gy0, gx0, gy0 + gh)
    for t in x_ticks:
        svg.line(sx(t), gy0 + gh, sx(t), gy0 + gh + 4)
        svg.text(sx(t), gy0 + gh + 16, fmt(t), size=10, anchor="middle")
    for t in y_ticks:
        svg.line(gx0 - 4, sy(t), gx0, sy(t))
        svg.text(gx0 - 7, sy(t) + 3.5, fmt(t), size=10, anchor="end")
        svg.line(gx0, sy(t), gx0 + gw, sy(t), stroke="#dddddd", width=0.5)
    svg.text(gx0 + gw / 2, gy0 + gh + 34, x_label, size=11, anchor="middle")
    svg.text(16, gy0 + gh / 2, y_label, size=11, anchor="middle")
    return sx, sy


def _legend(svg: _Svg, geom: PanelGeometry, y0: float, strategies):
    lx = geom.width - geom.right + 16
    ly = y0 + geom.top + 8
    for i, s in enumerate(sorted(strategies)):
        color = PALETTE.get(s, "#555555")
        svg.line(lx, ly + 16 * i, lx + 18, ly + 16 * i, stroke=color, width=2)
        svg.text(lx + 24, ly + 16 * i + 3.5, s, size=11)


def _draw_series(svg, sx, sy, series_by_strategy):
    for strategy in sorted(series_by_strategy):
        pts = series_by_strategy[strategy]
        color = PALETTE.get(strategy, "#555555")
        band = [(sx(p.x), sy(p.q3)) for p in pts] + [(sx(p.x), sy(p.q1)) for p in reversed(pts)]
        svg.polygon(band, fill=color)
        svg.polyline([(sx(p.x), sy(p.mean)) for p in pts], stroke=color)


def render_curves(series_by_strategy, title: str, path: str | Path, x_label: str = "labeled share of pool (%)", y_label: str = "defect F1", y_range=(0.0, 1.0)) -> None:
    """One F1-vs-budget panel: per-strategy mean polyline + Q1-Q3 band."""
    if not series_by_strategy or any(not v for v in series_by_strategy.values()):
        raise ValueError("empty facet: nothing to render")
    geom = PanelGeometry()
    svg = _Svg(int(geom.width), int(geom.height))
    xs = sorted({p.x for pts in series_by_strategy.values() for p in pts})
    sx, sy = _axes(
        svg, geom, 0.0, (xs[0], xs[-1]), y_range, title, x_label, y_label,
        x_ticks=xs, y_ticks=[i / 4 for i in range(5)],
    )
    _draw_series(svg, sx, sy, series_by_strategy)
    _legend(svg, geom, 0.0, series_by_strategy.keys())
    Path(path).write_text(svg.render())


def render_selection_diagnostics(faulty_series, uniqueness_series, pi_u: float, path: str | Path) -> None:
    """Two stacked panels: per-cycle faulty-selection proportion (with a
    reference line at pi_u) and per-cycle uniqueness scores.

    With no uniqueness data the second panel is replaced by a notice.
    """
    if not faulty_series or any(not v for v in faulty_series.values()):
        raise ValueError("empty input: nothing to render")
    geom = PanelGeometry()
    have_us = bool(uniqueness_series) and all(uniqueness_series.values())
    total_h = int(geom.height * 2) if have_us else int(geom.height + 40)
    svg = _Svg(int(geom.width), total_h)

    xs = sorted({p.x for pts in faulty_series.values() for p in pts})
    sx, sy = _axes(
        svg, geom, 0.0, (xs[0], xs[-1]), (0.0, 1.0),
        "(a) faulty share of each selected batch", "cycle", "faulty share",
        x_ticks=xs, y_ticks=[i / 4 for i in range(5)],
    )
    ref_y = sy(pi_u)
    svg.line(sx(xs[0]), ref_y, sx(xs[-1]), ref_y, stroke="#888888", width=1.0, dash="5,4")
    svg.text(sx(xs[-1]) + 4, ref_y + 3.5, f"pool = {fmt(pi_u)}", size=10)
    _draw_series(svg, sx, sy, faulty_series)
    _legend(svg, geom, 0.0, faulty_series.keys())

    if have_us:
        sx2, sy2 = _axes(
            svg, geom, geom.height, (xs[0], xs[-1]), (0.0, 1.0),
            "(b) uniqueness score across repetitions", "cycle", "uniqueness",
            x_ticks=xs, y_ticks=[i / 4 for i in range(5)],
        )
        _draw_series(svg, sx2, sy2, uniqueness_series)
        _legend(svg, geom, geom.height, uniqueness_series.keys())
    else:
        svg.text(geom.left, geom.height + 20, "uniqueness panel omitted: no uniqueness data", size=11)
    Path(path).write_text(svg.render())
