"""Prompt templates stored as text files next to this module.

A template file holds the system instruction, a line containing only ``---``,
then the user message with ``str.format`` fields.
"""

from importlib import resources
from pathlib import Path
from typing import Optional, Tuple, Union

from pydantic import BaseModel

from .errors import ConfigError

SEPARATOR = "---"


class PromptTemplate(BaseModel):
    name: str
    system: str
    user: str

    def render(self, **fields: str) -> Tuple[str, str]:
        """Return (system, user) with ``fields`` substituted into the user part."""
        try:
            return self.system, self.user.format(**fields)
        except KeyError as e:
            raise ConfigError(f"prompt {self.name!r} needs field {e.args[0]!r}") from e

    def static_length(self, **fields: str) -> int:
        """Characters of the rendered prompt with ``fields`` and the rest left empty."""
        names = {"question": "", "given": "", "passages": "", "gold": "", "predicted": ""}
        names.update(fields)
        system, user = self.render(**names)
        return len(system) + len(user)


def parse_template(name: str, raw: str) -> PromptTemplate:
    lines = raw.splitlines()
    try:
        cut = next(i for i, line in enumerate(lines) if line.strip() == SEPARATOR)
    except StopIteration:
        raise ConfigError(f"prompt {name!r} has no '{SEPARATOR}' separator line") from None
    system = "\n".join(lines[:cut]).strip()
    user = "\n".join(lines[cut + 1 :]).strip()
    return PromptTemplate(name=name, system=system, user=user)


def load_prompt(name: str, override: Optional[Union[str, Path]] = None) -> PromptTemplate:
    """Load the bundled template ``name`` (followup, answer, closed_book, judge, dataset)."""
    if override is not None:
        return parse_template(name, Path(override).read_text(encoding="utf-8"))
    try:
        raw = resources.files("followup_kg").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"no bundled prompt named {name!r}") from None
    return parse_template(name, raw)
