import math

# Column orders of every CSV the toolkit writes
TRACE_COLUMNS = (
    "slot", "state", "action", "cost",
    "arrivals", "services", "dropped", "backlog", "augmented", "gamma",
    "branch", "events",
)
SWEEP_COLUMNS = (
    "controller", "V", "e_w", "seed",
    "avg_cost", "avg_backlog", "avg_delay", "trimmed_delay",
    "drop_rate", "T_zeta", "detection_delays",
)
PLOT_COLUMNS = (
    "controller", "e_w", "V",
    "avg_cost_mean", "avg_cost_min", "avg_cost_max",
    "avg_backlog_mean", "trimmed_delay_mean", "trimmed_delay_min", "trimmed_delay_max",
    "avg_delay_mean", "drop_rate_mean", "runs",
)
SIGNIFICANT_DIGITS = 9
VECTOR_SEPARATOR = ";"


def format_number(value):
    """Format a number with 9 significant digits.

    Args:
        value: int, float or None

    Returns:
        "" for None, "inf"/"-inf"/"nan" for non-finite values, otherwise the %.9g text
    """
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    text = f"{value:.{SIGNIFICANT_DIGITS}g}"
    # avoid "-0" in otherwise identical files
    return "0" if text == "-0" else text


def format_vector(values):
    """Join a vector into one CSV cell, e.g. 1.5;0;2."""
    return VECTOR_SEPARATOR.join(format_number(v) for v in values)


def format_events(events):
    return "|".join(sorted(events))
