"""Prompt template expansion.

Must stay byte-compatible with the consumer of the anchor file: numeric
payloads render with minimal decimals ('0', '1', '12.5'), templates keep
their punctuation verbatim, one prompt per class name (given order) or per
grid value (ascending).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

CLASSIFICATION_TEMPLATE = "The subject is {action}."
REGRESSION_TEMPLATE = "The remaining useful life is {num}."

_PLACEHOLDER = re.compile(r"\{[^{}]*\}")


class PromptError(ValueError):
    pass


def format_value(v: float) -> str:
    return f"{float(v):.12g}"


@dataclass(frozen=True)
class PromptPlan:
    template: str
    kind: str  # "classification" | "regression"
    class_names: tuple[str, ...] | None = None
    numeric_range: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if not self.template or len(_PLACEHOLDER.findall(self.template)) != 1:
            raise PromptError(f"template needs exactly one placeholder: {self.template!r}")
        if self.kind == "classification":
            if not self.class_names or len(set(self.class_names)) != len(self.class_names):
                raise PromptError("classification needs distinct class names")
        elif self.kind == "regression":
            if self.numeric_range is None:
                raise PromptError("regression needs a numeric range")
            lo, hi, step = self.numeric_range
            if step <= 0 or lo >= hi:
                raise PromptError(f"bad range {self.numeric_range}")
            count = (hi - lo) / step
            if abs(count - round(count)) > 1e-9 * max(1.0, abs(count)) or round(count) < 2:
                raise PromptError("(max - min)/step must be an integer >= 2")
        else:
            raise PromptError(f"kind must be classification or regression, got {self.kind!r}")

    def payloads(self) -> list[str] | list[float]:
        if self.kind == "classification":
            return list(self.class_names)
        lo, hi, step = self.numeric_range
        n = int(round((hi - lo) / step))
        values = [lo + i * step for i in range(n + 1)]
        values[-1] = hi
        return values

    def prompts(self) -> list[str]:
        render = lambda text: _PLACEHOLDER.sub(lambda _: text, self.template, count=1)
        if self.kind == "classification":
            return [render(name) for name in self.class_names]
        return [render(format_value(v)) for v in self.payloads()]
