"""Bundled detection queries for the five-step intrusion demo."""

from importlib import resources

DEMO_QUERY_NAMES = [
    "c1_attachment_drop",
    "c2_macro_backdoor",
    "c3_scan_and_creddump",
    "c4_dropper_on_db",
    "c5_exfil_chain",
    "invariant_unseen_child",
    "timeseries_net_spike",
    "outlier_dstip_volume",
]


def demo_query(name: str) -> str:
    return (resources.files(__package__) / "queries" / f"{name}.saql").read_text()


def demo_queries() -> list[tuple[str, str]]:
    """All eight bundled queries as (name, source text)."""
    return [(name, demo_query(name)) for name in DEMO_QUERY_NAMES]
