"""Markdown scaffold for documenting a data analysis end to end."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from pcsinfer.config_manager import save_text

LOG = logging.getLogger("pcsinfer.docgen")


@dataclass(frozen=True)
class DocSection:
    title: str
    media: str
    guidance: Tuple[str, ...]


@dataclass(frozen=True)
class DocScaffold:
    """Six sections, always in this order."""

    sections: Tuple[DocSection, ...]
    title: str = "Analysis documentation"

    def __post_init__(self) -> None:
        if len(self.sections) != 6:
            raise ValueError(f"a documentation scaffold has exactly six sections, got {len(self.sections)}")

    def render(self, provenance: Optional[str] = None) -> str:
        lines = [f"<!-- {provenance} -->", ""] if provenance else []
        lines += [f"# {self.title}", ""]
        for section in self.sections:
            lines.append(f"## {section.title} ({section.media})")
            lines.append("")
            lines.extend(f"- TODO: {item}" for item in section.guidance)
            lines.append("")
        return "\n".join(lines)


SECTIONS: Tuple[DocSection, ...] = (
    DocSection(
        "Domain problem formulation",
        "narrative",
        (
            "State the real-world question and how the analysis answers it.",
            "Say how the question maps to a prediction target and to features.",
            "Record who the results are for and what decision they feed.",
        ),
    ),
    DocSection(
        "Data collection and storage",
        "narrative",
        (
            "Describe how, when and by whom the data were gathered.",
            "Note the storage format and where the raw files live.",
            "List what is known about the collection process that could bias later steps.",
        ),
    ),
    DocSection(
        "Data cleaning and preprocessing",
        "narrative, code, visualization",
        (
            "Record every cleaning choice (filters, transforms, imputation) and why it was made.",
            "Keep the code that performs each step next to its description.",
            "List the reasonable alternatives to each choice; they are data perturbations for the stability analysis.",
        ),
    ),
    DocSection(
        "Exploratory data analysis",
        "narrative, code, visualization",
        (
            "Summarize the data with tables and plots, and note what they suggest.",
            "Check whether the patterns hold up under reasonable perturbations of the data.",
        ),
    ),
    DocSection(
        "Modeling and Post-hoc analysis",
        "narrative, code, visualization",
        (
            "Say which models were fitted and why they suit the domain question.",
            "Report the prediction screening: metric, held-out data and the models that passed.",
            "Report stability of the target across data and model perturbations, with perturbation intervals.",
        ),
    ),
    DocSection(
        "Interpretation of results",
        "narrative and visualization",
        (
            "Translate the stable findings back into the language of the domain question.",
            "State what the analysis cannot support and which judgment calls remain.",
        ),
    ),
)


def build_scaffold(title: str = "Analysis documentation") -> DocScaffold:
    LOG.debug("Building scaffold with %d sections", len(SECTIONS))
    return DocScaffold(sections=SECTIONS, title=title)


def write_scaffold(
    path: str | Path, title: str = "Analysis documentation", provenance: Optional[str] = None
) -> Path:
    """
    Write the scaffold to ``path``, with ``provenance`` as a leading HTML
    comment when given. Regenerating over an existing file gives identical
    bytes.

    Raises:
        OSError: if the path is not writable
    """
    return save_text(build_scaffold(title).render(provenance), path)
