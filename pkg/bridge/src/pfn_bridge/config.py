"""Server configuration."""

from dataclasses import dataclass, field

BACKENDS = ("tabpfn", "causalpfn", "reference-logistic")


@dataclass(frozen=True)
class ServerConfig:
    """How to listen and which model family answers requests.

    listen is "stdio" or a HOST:PORT address. max_models bounds the
    per-connection model store; the least recently used fit is evicted
    beyond that, which keeps bootstrap loops from accumulating hundreds
    of fitted models. extra_settings carries backend-specific inference
    knobs (device placement aside); everything lands in the provenance
    record the server logs at startup.
    """

    listen: str = "stdio"
    backend: str = "reference-logistic"
    device: str = "cpu"
    max_models: int = 8
    extra_settings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(
                f"unknown backend {self.backend!r}; expected one of {BACKENDS}"
            )
        if self.max_models < 1:
            raise ValueError("max_models must be >= 1")
        if self.listen != "stdio":
            host, _, port = self.listen.rpartition(":")
            if not host or not port.isdigit():
                raise ValueError(
                    f"listen must be 'stdio' or HOST:PORT, got {self.listen!r}"
                )

    @property
    def host_port(self):
        host, _, port = self.listen.rpartition(":")
        return host, int(port)

    def provenance(self) -> dict:
        rec = {
            "backend": self.backend,
            "device": self.device,
            "max_models": self.max_models,
            "listen": self.listen,
        }
        rec.update(self.extra_settings)
        return rec
