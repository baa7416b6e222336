"""Collects one verdict line per acceptance criterion for the session summary."""

RESULTS: dict = {}


def record(number: int, title: str, passed: bool, detail: str = "") -> None:
    RESULTS[number] = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}" + (
        f" ({detail})" if detail else ""
    )
