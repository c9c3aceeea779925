import socket
import threading
import time

import pytest
import uvicorn

from metaphor_forge.backends import (
    MockChatBackend,
    MockEmbeddingBackend,
    MockImageBackend,
)
from metaphor_forge.decomposer import Decomposer
from metaphor_forge.judge import VlmJudge
from metaphor_forge.rewards import RewardScorer
from metaphor_forge.service import create_app


class ServiceUnderTest:
    """A live, fully mock-backed scoring service on a local port."""

    def __init__(self):
        self.llm = MockChatBackend(seed=0)
        self.vlm = MockChatBackend(seed=1)
        self.image = MockImageBackend(seed=0)
        self.embed = MockEmbeddingBackend(seed=0)
        decomposer = Decomposer(self.llm, judge=self.vlm)
        self.scorer = RewardScorer(self.image, VlmJudge(self.vlm), self.embed,
                                   decomposer)
        self.app = create_app(self.scorer)
        with socket.socket() as s:
            s.bind(("127.0.0.1", 0))
            self.port = s.getsockname()[1]
        self.url = f"http://127.0.0.1:{self.port}"
        self.server = uvicorn.Server(uvicorn.Config(
            self.app, host="127.0.0.1", port=self.port, log_level="error"))
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def start(self):
        self.thread.start()
        deadline = time.monotonic() + 10
        while not self.server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("service did not start in time")
            time.sleep(0.01)

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=10)


@pytest.fixture(scope="session")
def service():
    svc = ServiceUnderTest()
    svc.start()
    yield svc
    svc.stop()
