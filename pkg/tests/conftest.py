import os

import hypothesis
import pytest

from zkmark.binding import SecretKey
from zkmark.fixtures import toy_autoencoder, toy_gan
from zkmark.pipeline import build_keys
from zkmark.remote import DeployedModel, MockProverServer
from zkmark.slzkcc import AeBottleneck, GanPrefix, calibrate, calibration_batches, select_layers

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

OWNER_KEY = b"owner-secret-key-0123456789"


class Setup:
    """A calibrated, keyed fixture model."""

    def __init__(self, graph, policy):
        self.graph = graph
        self.policy = policy
        self.selection = select_layers(graph, policy)
        self.batches = calibration_batches(graph, self.selection)
        self.calib = calibrate(self.selection, self.batches)
        keys = build_keys(graph, policy, self.calib)
        self.pk, self.vk = keys.pk, keys.vk
        self.instance = keys.pk.instance

    def deployed(self):
        return DeployedModel(self.pk, self.selection, self.calib)


@pytest.fixture(scope="session")
def gan():
    return Setup(toy_gan(), GanPrefix(1))


@pytest.fixture(scope="session")
def ae():
    return Setup(toy_autoencoder(), AeBottleneck())


@pytest.fixture(scope="session", params=["gan", "ae"])
def model(request, gan, ae):
    return {"gan": gan, "ae": ae}[request.param]


@pytest.fixture(scope="session")
def secret():
    return SecretKey(OWNER_KEY)


@pytest.fixture(scope="session")
def mock_prover(gan, ae):
    server = MockProverServer({gan.graph.model_id: gan.deployed(), ae.graph.model_id: ae.deployed()})
    server.start()
    yield server
    server.stop()


# acceptance summary: one pass/fail line per criterion

_acceptance: dict[int, list] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "acceptance" in props:
        number, title = props["acceptance"]
        entry = _acceptance.setdefault(number, {"title": title, "ok": True, "measured": []})
        entry["ok"] &= report.passed
        if "measured" in props:
            entry["measured"].append(props["measured"])


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m:
            item.user_properties.append(("acceptance", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        e = _acceptance[number]
        line = f"criterion {number:>2}: {'PASS' if e['ok'] else 'FAIL'}  {e['title']}"
        if e["measured"]:
            line += "  [" + "; ".join(e["measured"]) + "]"
        terminalreporter.write_line(line)
