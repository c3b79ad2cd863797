"""Plain-text report rendering using Jinja2.

This module provides:
- Secure template rendering in a Jinja2 SandboxedEnvironment
- Built-in templates for the plan listing and the compatibility,
  verification, control and reconstruction reports
- A ``sci`` filter for fixed scientific notation

Rendered reports contain no timestamps, so identical inputs give identical text.

Time Complexity: O(n) where n is the number of report entries
Space Complexity: O(n) for rendered content
"""

import logging
from typing import Any

from jinja2 import DictLoader, StrictUndefined, TemplateError
from jinja2.sandbox import SandboxedEnvironment

from beamnet.exceptions import ReportRenderError
from beamnet.models import (
    CompatibilityReport,
    ControlReport,
    ReconstructionReport,
    SufficiencyReport,
    VerificationReport,
)

logger = logging.getLogger(__name__)

TEMPLATES: dict[str, str] = {
    "plan.txt": """\
plan for charged {{ charged }} -> controlled {{ controlled }} (path edges {{ path_edges }})
{% for line in lines %}
{{ line }}
{% endfor %}
sufficient conditions: {{ "PASS" if sufficiency.passed else "FAIL" }}
{% for violation in sufficiency.violations %}
  - {{ violation }}
{% endfor %}
""",
    "compatibility.txt": """\
{{ report.title }}: {{ "PASS" if report.passed else "FAIL" }} (max residual {{ report.max_residual | sci }})
{% for e in report.entries %}
{{ "%-22s"|format(e.family) }} node={{ e.node if e.node is not none else "-" }} beam={{ e.beam if e.beam is not none else "-" }} residual={{ e.residual | sci }} tol={{ e.tolerance | sci }} {{ "ok" if e.passed else "VIOLATED" }}
{% endfor %}
""",
    "verification.txt": """\
initial recovery: {{ "PASS" if report.passed else "FAIL" }} (max deviation {{ report.max_deviation | sci }}, tol {{ report.tolerance | sci }})
{% for e in report.entries %}
beam {{ e.beam }}: {{ e.region }}: deviation={{ e.deviation | sci }}
{% endfor %}
""",
    "control.txt": """\
controllability time T_bar={{ report.controllability_time | sci }} T*={{ report.t_star | sci }} T={{ report.horizon | sci }}
{% for beam, time in report.transmission_times | dictsort %}
T_{{ beam }}={{ time | sci }}
{% endfor %}
{% for step in report.steps %}
step {{ loop.index }}: {{ step }}
{% endfor %}
{% if report.node_residual is not none %}
node residual={{ report.node_residual | sci }}
{% endif %}
{% if report.tracking_error is not none %}
tracking error={{ report.tracking_error | sci }}
{% endif %}
""",
    "reconstruction.txt": """\
reconstruction anchored at node {{ report.anchor_node }}
{% for e in report.entries %}
beam {{ e.beam }}: orthogonality drift={{ e.orthogonality_drift | sci }} last-six residual={{ e.last6_residual | sci }}{% if e.geb_residual is not none %} GEB residual={{ e.geb_residual | sci }}{% endif %}

{% endfor %}
{% if report.joint_rotation_mismatch is not none %}
joint rotation mismatch={{ report.joint_rotation_mismatch | sci }}
{% endif %}
{% if report.joint_position_mismatch is not none %}
joint position mismatch={{ report.joint_position_mismatch | sci }}
{% endif %}
""",
}


def _sci(value: float) -> str:
    return f"{value:.3e}"


class ReportRenderer:
    """Renders reports from the built-in templates."""

    def __init__(self, templates: dict[str, str] | None = None) -> None:
        """Initialize the sandboxed environment.

        Args:
            templates: Templates overriding or extending the built-in ones
        """
        self.env = SandboxedEnvironment(
            loader=DictLoader({**TEMPLATES, **(templates or {})}),
            autoescape=False,
            trim_blocks=True,
            lstrip_blocks=True,
            undefined=StrictUndefined,
            keep_trailing_newline=True,
        )
        self.env.filters["sci"] = _sci

    def render(self, name: str, **context: Any) -> str:
        """Render template ``name``.

        Raises:
            ReportRenderError: If the template is missing or fails to render
        """
        try:
            text = self.env.get_template(name).render(**context)
        except TemplateError as e:
            raise ReportRenderError(f"Failed to render report '{name}': {e}") from e
        logger.debug(f"Rendered report '{name}' ({len(text)} characters)")
        return text

    def plan(
        self,
        lines: list[str],
        sufficiency: SufficiencyReport,
        charged: list[int],
        controlled: list[int],
        path_edges: list[int],
    ) -> str:
        """Plan listing with the sufficient-condition verdict."""
        return self.render(
            "plan.txt",
            lines=lines,
            sufficiency=sufficiency,
            charged=charged,
            controlled=controlled,
            path_edges=path_edges,
        )

    def compatibility(self, report: CompatibilityReport) -> str:
        """Compatibility report."""
        return self.render("compatibility.txt", report=report)

    def verification(self, report: VerificationReport) -> str:
        """Initial-recovery verification report."""
        return self.render("verification.txt", report=report)

    def control(self, report: ControlReport) -> str:
        """Control synthesis diagnostics."""
        return self.render("control.txt", report=report)

    def reconstruction(self, report: ReconstructionReport) -> str:
        """Reconstruction diagnostics."""
        return self.render("reconstruction.txt", report=report)
