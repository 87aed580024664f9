"""Embedded reference counts for a 1112-subject two-arm comparison.

Used by the documentation examples and the regression tests for the
proportion machinery: arm sizes, per-cause first-ICE counts, and mean
exposure (weeks) among affected subjects where known.
"""

from .proportions import diff_from_counts

REFERENCE_N1 = 663
REFERENCE_N0 = 449

# cause -> (arm1 events, arm0 events)
REFERENCE_COUNTS = {
    "Any": (154, 81),
    "AE": (70, 24),
    "LoE": (18, 11),
    "Admin": (70, 50),
}

# cause -> (arm0 mean exposure weeks, arm1 mean exposure weeks)
REFERENCE_EXPOSURE = {
    "AE": (23.1, 12.3),
    "LoE": (16.5, 19.6),
}


def reference_ice_rows(alpha: float = 0.05, ci_method: str = "wald",
                       test_method: str = "fisher") -> dict:
    """ProportionDiffEstimate per cause from the embedded counts."""
    return {
        cause: diff_from_counts(x1, REFERENCE_N1, x0, REFERENCE_N0, cause=cause,
                                alpha=alpha, ci_method=ci_method,
                                test_method=test_method)
        for cause, (x1, x0) in REFERENCE_COUNTS.items()
    }
