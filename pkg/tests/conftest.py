import textwrap

import pytest

from bsnmac.scenario import parse_scenario


def scenario(text: str):
    return parse_scenario(textwrap.dedent(text))


def node_block(node_id: str, **keys) -> str:
    lines = [f"[node.{node_id}]"]
    lines += [f"{k} = {v}" for k, v in keys.items()]
    return "\n".join(lines) + "\n"


def ptdma_text(patterns, duration_us=None, extra="", **node_keys) -> str:
    """Pattern-TDMA scenario with one implanted sensor per pattern, short links."""
    n = len(patterns)
    L = len(patterns[0])
    frame = 10_000 * n
    duration = duration_us if duration_us is not None else 2 * L * frame
    out = [f"[scenario]\nname = t\nmac = ptdma\nduration_us = {duration}\n", extra]
    for i, p in enumerate(patterns):
        keys = {"placement": "inbody", "depth_m": 0.02, "distance_m": 0.15, "pattern": p}
        keys.update(node_keys)
        out.append(node_block(f"n{i}", **keys))
    return "\n".join(out)


@pytest.fixture
def make():
    return scenario


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
