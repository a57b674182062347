from __future__ import annotations

import enum


class Label(enum.IntEnum):
    """Class labels. Genuine speech is the positive class for scoring."""

    SYNTHESIZED = 0
    GENUINE = 1

    @classmethod
    def parse(cls, text: str) -> "Label":
        key = text.strip().lower()
        for member in cls:
            if member.name.lower() == key:
                return member
        raise ValueError(f"unknown label {text!r}; expected 'genuine' or 'synthesized'")

    def __str__(self) -> str:
        return self.name.lower()
