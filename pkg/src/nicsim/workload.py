"""Workload configuration and deterministic trace generation.

Keys are fixed-width strings ("k" + zero-padded index), values are
fixed-width strings unique per write so histories can be checked without
extra bookkeeping. Sessions are closed-loop: each issues its next
operation when the previous one completes.
"""

import random
from bisect import bisect_right
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


def format_key(idx, key_size):
    body = str(idx).zfill(key_size - 1)
    if len(body) != key_size - 1:
        raise ConfigError(f"key index {idx} does not fit in {key_size} bytes")
    return "k" + body


def parse_key(key, key_size):
    if len(key) != key_size or not key.startswith("k"):
        return None
    try:
        return int(key[1:])
    except ValueError:
        return None


def initial_fn(key_count, key_size, value_size, seed):
    """Initial-state lookup for checker and datastore pre-population."""

    def initial(key):
        idx = parse_key(key, key_size)
        if idx is None or not 0 <= idx < key_count:
            return None
        return initial_value(idx, value_size, seed)

    return initial


def _fit(text, size):
    if len(text) > size:
        raise ConfigError(f"value of {len(text)} bytes exceeds size {size}")
    return text.ljust(size, ".")


def initial_value(idx, value_size, seed):
    return _fit(f"i{seed % 10_000:04d}x{idx}", value_size)


def write_value(op_index, value_size, seed):
    return _fit(f"w{seed % 10_000:04d}x{op_index}", value_size)


@dataclass
class WorkloadConfig:
    replicas: int = 5
    key_count: int = 1_000_000
    key_size: int = 8
    value_size: int = 32
    write_ratio: float = 0.20
    distribution: str = "uniform"
    zipf_theta: float = 0.99
    op_count: int = 100_000
    sessions_per_replica: int = 2
    think_time_ns: int = 0
    seed: int = 1

    def validate(self):
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if not 0.0 <= self.write_ratio <= 1.0:
            raise ConfigError("write_ratio must be in [0, 1]")
        if self.op_count < 0:
            raise ConfigError("op_count must be >= 0")
        if self.key_count < 1:
            raise ConfigError("key_count must be >= 1")
        if self.key_size < 2:
            raise ConfigError("key_size must be >= 2")
        if len(str(self.key_count - 1)) > self.key_size - 1:
            raise ConfigError(f"{self.key_count} keys do not fit in {self.key_size}-byte keys")
        needed = 6 + max(len(str(self.key_count - 1)), len(str(max(self.op_count - 1, 0))))
        if self.value_size < needed:
            raise ConfigError(
                f"value_size {self.value_size} too small for unique values (need {needed})"
            )
        if self.distribution not in ("uniform", "zipf"):
            raise ConfigError(f"unknown distribution {self.distribution!r}")
        if self.distribution == "zipf" and self.zipf_theta <= 0:
            raise ConfigError("zipf_theta must be > 0")
        if self.sessions_per_replica < 1:
            raise ConfigError("sessions_per_replica must be >= 1")
        if self.think_time_ns < 0:
            raise ConfigError("think_time_ns must be >= 0")
        return self


READ = "read"
WRITE = "write"


@dataclass(frozen=True)
class Op:
    kind: str
    key: str
    value: str | None = None
    gap_ns: int = 0


@dataclass
class SessionTrace:
    session_id: int
    home_replica: int
    ops: list = field(default_factory=list)


class ZipfSampler:
    """Bounded Zipf over ranks 1..n with exponent theta."""

    def __init__(self, n, theta):
        self.cum = []
        total = 0.0
        for rank in range(1, n + 1):
            total += 1.0 / rank**theta
            self.cum.append(total)
        self.total = total

    def sample(self, rng):
        return bisect_right(self.cum, rng.random() * self.total)


def generate_trace(cfg: WorkloadConfig):
    """Deterministic per-session op lists; op i goes to session i mod S."""
    cfg.validate()
    rng = random.Random(cfg.seed)
    n_sessions = cfg.replicas * cfg.sessions_per_replica
    sessions = [
        SessionTrace(sid, sid % cfg.replicas) for sid in range(n_sessions)
    ]
    sampler = None
    if cfg.distribution == "zipf":
        sampler = ZipfSampler(cfg.key_count, cfg.zipf_theta)
    for op_index in range(cfg.op_count):
        if sampler is None:
            key_idx = rng.randrange(cfg.key_count)
        else:
            key_idx = sampler.sample(rng)
        key = format_key(key_idx, cfg.key_size)
        if rng.random() < cfg.write_ratio:
            op = Op(WRITE, key, write_value(op_index, cfg.value_size, cfg.seed),
                    cfg.think_time_ns)
        else:
            op = Op(READ, key, None, cfg.think_time_ns)
        sessions[op_index % n_sessions].ops.append(op)
    return sessions
