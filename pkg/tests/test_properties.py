import random

import pytest

from coapicn.nap import EntryMode
from coapicn.sim import run
from helpers import build_scenario, random_scenario_doc

SEEDS = range(40)


def _fixed_answers(doc, sim):
    """(client, token) -> payloads for GETs on resources whose value never changes."""
    fixed = {(s["host"], path) for s in doc["servers"] for path, r in s["resources"].items() if "observable" not in r}
    out = {}
    for c in doc["clients"]:
        for a in c["actions"]:
            if a["op"] == "get" and (a["host"], a["path"]) in fixed:
                token = a["token"].encode()
                out[(c["name"], token)] = [r.payload for r in sim.clients[c["name"]].responses if r.token == token]
    return out


@pytest.mark.parametrize("seed", SEEDS)
def test_modes_deliver_the_same_answers(seed):
    icn = run(build_scenario(random_scenario_doc(random.Random(seed), "icn")))
    doc = random_scenario_doc(random.Random(seed), "baseline")
    base = run(build_scenario(doc))
    assert _fixed_answers(doc, icn.sim) == _fixed_answers(doc, base.sim)
    for rep in (icn.report, base.report):
        for counter in ("orphan_responses", "stale_notices", "token_mismatch"):
            assert rep.counter(counter) == 0
    assert base.report.counter("suppressed_local") == base.report.counter("suppressed_at_server") == 0


@pytest.mark.parametrize("seed", SEEDS)
def test_no_entries_left_behind(seed):
    result = run(build_scenario(random_scenario_doc(random.Random(seed))))
    for name, nap in result.sim.naps.items():
        # only observations nobody cancelled may outlive the run
        for entry in nap.client_entries.values():
            assert entry.mode is EntryMode.OBSERVE and entry.local_waiters, (name, str(entry.fingerprint))
        assert nap.outbox == {}, name
        assert nap.cancelled_server_tokens == {}, name
