# Copyright 2026 async-sgld contributors.
# See LICENSE file for licensing details.

"""Render the human-readable run and theory reports from the jinja2 templates."""

import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Set, Tuple, Union

import pandas as pd
from jinja2 import Environment, Template, meta

from async_sgld.errors import InvalidInputError
from async_sgld.theory import TheoryParams

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"
SUMMARY_TEMPLATE = TEMPLATE_DIR / "summary.txt.j2"
THEORY_TEMPLATE = TEMPLATE_DIR / "theory.txt.j2"


def read_template(filename: Union[str, Path]) -> Tuple[str, Set[str]]:
    """Read a template file from disk.

    Returns:
        A 2-tuple of the contents and the set of template variables.
    """
    env = Environment()
    with open(filename) as t:
        contents = t.read()

    ast = env.parse(contents)
    return contents, meta.find_undeclared_variables(ast)


def render(template: Path, output: Path, variables: Mapping[str, Any]) -> None:
    """Render `template` to `output`.

    Raises:
        InvalidInputError: the template uses a variable that is not supplied.
    """
    contents, needed = read_template(template)
    missing = sorted(needed - set(variables))
    if missing:
        raise InvalidInputError(f"{template.name} needs {', '.join(missing)}")

    # plain text, nothing to escape
    jinja_template = Template(contents, keep_trailing_newline=True)
    with open(output, "wt") as o:
        jinja_template.stream(**variables).dump(o)
    logger.debug("rendered %s to %s", template.name, output)


def render_summary(summary: Dict[str, Any], output: Path) -> None:
    """Render the run summary; optional fields go to the extras block."""
    extras = {
        k: summary[k] for k in ("coeff_error", "amari", "elapsed_s") if k in summary
    }
    render(SUMMARY_TEMPLATE, output, {"summary": summary, "extras": extras})


def render_theory(tp: TheoryParams, table: pd.DataFrame, output: Path) -> None:
    """Theory constants followed by one block per prescription (kl, w2)."""
    variants = {
        variant: dict(zip(rows["quantity"], rows["value"]))
        for variant, rows in table.groupby("variant", sort=False)
    }
    render(THEORY_TEMPLATE, output, {"params": tp, "variants": variants})
