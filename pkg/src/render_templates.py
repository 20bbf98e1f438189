# src/render_templates.py

from pathlib import Path

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from src.utils import resolve_uri

REPORT_TEMPLATE = "benchmark_report.md.j2"


def _fmt(value, digits: int = 4) -> str:
    if value is None:
        return "n/a"
    try:
        return f"{float(value):.{digits}g}"
    except (TypeError, ValueError):
        return str(value)


def render_benchmark_report(
    summary: dict,
    reports: list,
    output_dir: Path,
    template_dir: Path = None,
) -> Path:
    """
    Render the Markdown benchmark report with Jinja2.

    Parameters
    ----------
    summary : dict
        Contents of summary.json.
    reports : list of dict
        Bias/precision rows (EstimateReport.to_dict()).
    output_dir : Path
        Directory to write benchmark_report.md into.
    template_dir : Path
        Directory holding the template; defaults to templates: in the repo.
    """
    template_dir = Path(template_dir) if template_dir else resolve_uri("templates:")
    env = Environment(
        loader=FileSystemLoader(str(template_dir)),
        undefined=StrictUndefined,
        trim_blocks=True,
        lstrip_blocks=True,
    )
    env.filters["fmt"] = _fmt

    md_template = env.get_template(REPORT_TEMPLATE)
    md_output = md_template.render(summary=summary, reports=reports)
    target = Path(output_dir) / "benchmark_report.md"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(md_output, encoding="utf-8")
    return target
