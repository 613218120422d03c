"""
Plain-text summaries rendered with jinja2.
"""

from typing import Any, Dict, List, Sequence

from jinja2 import Template

SCORECARD_TEMPLATE = Template(
    """\
Scorecard  (version {{ provenance.version }}, grid {{ provenance.grid_fingerprint }}, seed {{ provenance.rng_seed }})
{{ "-" * 92 }}
{{ "%-28s"|format("check") }} {{ "%-13s"|format("status") }} {{ "%16s"|format("lhs") }} {{ "%-2s"|format("") }} {{ "%16s"|format("rhs") }} {{ "%12s"|format("margin") }}
{{ "-" * 92 }}
{% for c in checks -%}
{{ "%-28s"|format(c.name) }} {{ "%-13s"|format(c.status) }} {{ fmt(c.lhs) }} {{ "%-2s"|format(c.relation) }} {{ fmt(c.rhs) }} {{ fmt(c.margin, 12) }}
{% endfor -%}
{{ "-" * 92 }}
pass {{ summary["pass"] }}   fail {{ summary["fail"] }}   inconclusive {{ summary["inconclusive"] }}
{% if derived -%}
mu {{ fmt(derived.mu, 12) }}   delta {{ fmt(derived.delta, 12) }}
{% for eps, value in derived.delta_eps.items() -%}
  eps {{ "%-8s"|format(eps) }} mu_eps {{ fmt(derived.mu_eps[eps], 12) }}   delta_eps {{ fmt(value, 12) }}
{% endfor -%}
{% endif -%}
"""
)

SWEEP_TEMPLATE = Template(
    """\
{{ title }}
{{ "-" * (16 * columns|length) }}
{% for col in columns %}{{ "%16s"|format(col) }}{% endfor %}
{% for row in rows -%}
{% for col in columns %}{{ fmt(row.get(col)) }}{% endfor %}
{% endfor -%}
{% for line in footer -%}
{{ line }}
{% endfor -%}
"""
)


def _fmt(value: Any, width: int = 16) -> str:
    if value is None:
        return "-".rjust(width)
    if isinstance(value, bool):
        return str(value).rjust(width)
    if isinstance(value, (int, float)):
        return f"{value:{width}.6e}" if width >= 14 else f"{value:{width}.3e}"
    return str(value).rjust(width)


def render_scorecard(scorecard: Dict[str, Any]) -> str:
    return SCORECARD_TEMPLATE.render(
        checks=scorecard["checks"],
        summary=scorecard["summary"],
        provenance=scorecard.get("provenance", {}),
        derived=scorecard.get("derived", {}),
        fmt=_fmt,
    )


def render_sweep(title: str, rows: List[Dict[str, Any]], footer: Sequence[str] = ()) -> str:
    columns: List[str] = []
    for row in rows:
        columns.extend(key for key in row if key not in columns)
    return SWEEP_TEMPLATE.render(title=title, rows=rows, columns=columns, footer=list(footer), fmt=_fmt)
