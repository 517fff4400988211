"""Server configuration and the salted credential roster.

Config files are flat ``key = value`` lines::

    prime = 2305843009213693951
    capacity = 8
    dim = 17
    listen = 127.0.0.1:7400
    batch_window_ms = 250
    auth_enabled = false
    user.alice = pbkdf2_sha256$20000$<salt hex>$<hash hex>
"""

import configparser
import hashlib
import hmac
import os
from dataclasses import dataclass, field as dc_field

from ..errors import BadConfig
from ..ffield import M61

DEFAULT_ITERATIONS = 20_000
CHURN_THRESHOLD = 3


def hash_credential(password: str, salt: bytes = None, iterations: int = DEFAULT_ITERATIONS) -> str:
    salt = salt if salt is not None else os.urandom(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return f"pbkdf2_sha256${iterations}${salt.hex()}${digest.hex()}"


def check_credential(stored: str, password: str) -> bool:
    try:
        scheme, iterations, salt, digest = stored.split("$")
        if scheme != "pbkdf2_sha256":
            return False
        got = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), bytes.fromhex(salt), int(iterations))
    except ValueError:
        return False
    return hmac.compare_digest(got.hex(), digest)


def parse_listen(listen: str):
    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit():
        raise BadConfig(f"listen must be host:port, got {listen!r}")
    return host or "127.0.0.1", int(port)


@dataclass
class ServerConfig:
    prime: int = M61
    capacity: int = 8
    dim: int = 0
    listen: str = "127.0.0.1:0"
    batch_window_ms: int = 250
    auth_enabled: bool = False
    strict: bool = True
    churn_threshold: int = CHURN_THRESHOLD
    roster: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.dim == 0:
            self.dim = 2 * self.capacity + 1
        self.validate()

    def validate(self):
        if self.capacity < 1:
            raise BadConfig("capacity must be >= 1")
        if self.dim < self.capacity:
            raise BadConfig(f"dim {self.dim} < capacity {self.capacity}")
        if self.strict and self.dim <= 2 * self.capacity:
            raise BadConfig(f"protocol mode needs dim > 2*capacity (dim={self.dim})")
        if self.batch_window_ms <= 0:
            raise BadConfig("batch_window_ms must be positive")
        parse_listen(self.listen)

    @property
    def address(self):
        return parse_listen(self.listen)

    def add_user(self, member_id: str, password: str, iterations: int = DEFAULT_ITERATIONS):
        self.roster[member_id] = hash_credential(password, iterations=iterations)

    @classmethod
    def from_text(cls, text: str) -> "ServerConfig":
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                           comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string("[okmp]\n" + text)
        except configparser.Error as exc:
            raise BadConfig(str(exc)) from exc
        section = parser["okmp"]
        kwargs = {}
        roster = {}
        try:
            for key, raw in section.items():
                value = raw.strip().strip('"')
                if key.startswith("user."):
                    roster[key[5:]] = value
                elif key in ("prime", "capacity", "dim", "batch_window_ms", "churn_threshold"):
                    kwargs[key] = int(value, 0)
                elif key == "listen":
                    kwargs[key] = value
                elif key == "auth_enabled":
                    kwargs[key] = section.getboolean(key)
                elif key == "mode":
                    if value not in ("protocol", "test"):
                        raise BadConfig(f"mode must be protocol or test, got {value!r}")
                    kwargs["strict"] = value == "protocol"
                else:
                    raise BadConfig(f"unknown config key {key!r}")
        except ValueError as exc:
            raise BadConfig(str(exc)) from exc
        return cls(roster=roster, **kwargs)

    @classmethod
    def from_file(cls, path) -> "ServerConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_text(fh.read())
        except OSError as exc:
            raise BadConfig(f"cannot read {path}: {exc}") from exc
