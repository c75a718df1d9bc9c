"""Flat ``key=value`` experiment configuration.

One pair per line; ``#`` starts a comment; blank lines are ignored.
List-valued keys (``noise_std`` for sweeps, ``lambdas``) take comma
separated values. Every problem is reported as a ``ConfigError`` whose
``key`` attribute names the offending key.

Minimal ``run`` file::

    command=run
    algorithm=cs_sgd
    d=16384
    n=20
    T=1000
    K=500
    Q=5000
    master_seed=0
    output_path=out/run
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass

from .transform import DCT_MAX_DIM, next_pow2

COMMANDS = ("run", "sweep-noise", "recon-bench", "diag")
ALGORITHMS = ("cs_sgd", "sketch_sgd", "vanilla_sgd")
BASES = ("wht", "dct")

KNOWN_KEYS = (
    "command", "algorithm", "d", "n", "T", "K", "Q", "eta_rule", "noise_std",
    "sketch_rows", "sketch_cols", "base_transform", "master_seed", "num_trials",
    "output_path", "lambdas", "recon_nnz", "recon_sigma",
)

_REQUIRED = {
    "run": ("algorithm", "d", "n", "T", "K", "master_seed"),
    "sweep-noise": ("algorithm", "d", "n", "T", "K", "master_seed", "noise_std"),
    "recon-bench": ("d", "K", "lambdas", "master_seed"),
    "diag": ("d", "n", "T", "K", "Q", "master_seed"),
}


class ConfigError(ValueError):
    def __init__(self, key: str | None, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    output_path: str
    master_seed: int
    d: int
    K: int
    algorithm: str = "cs_sgd"
    n: int = 1
    T: int = 0
    Q: int | None = None
    eta_rule: str = "one_over_sqrt_T"
    eta_value: float | None = None
    noise_std: tuple = (0.0,)
    sketch_rows: int | None = None
    sketch_cols: int | None = None
    base_transform: str = "wht"
    num_trials: int = 1
    lambdas: tuple = ()
    recon_nnz: int | None = None
    recon_sigma: float = 0.05

    @property
    def d_aug(self) -> int:
        return next_pow2(self.d)

    @property
    def eta(self) -> float | None:
        """Fixed step, or None for the 1/sqrt(T) rule."""
        return self.eta_value if self.eta_rule == "fixed" else None

    def as_dict(self) -> dict:
        out = asdict(self)
        out["noise_std"] = list(self.noise_std)
        out["lambdas"] = list(self.lambdas)
        return out


def _int(key, raw):
    try:
        return int(raw, 10)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {raw!r}") from None


def _float(key, raw):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {raw!r}") from None
    if v != v or v in (float("inf"), float("-inf")):
        raise ConfigError(key, "must be finite")
    return v


def _float_list(key, raw):
    parts = [p.strip() for p in raw.split(",")]
    if not parts or any(p == "" for p in parts):
        raise ConfigError(key, f"malformed list {raw!r}")
    return tuple(_float(key, p) for p in parts)


def _choice(key, raw, allowed):
    if raw not in allowed:
        raise ConfigError(key, f"must be one of {', '.join(allowed)}, got {raw!r}")
    return raw


_ETA_FIXED = re.compile(r"fixed\(\s*([^()]+?)\s*\)$")


def _eta(raw):
    if raw == "one_over_sqrt_T":
        return "one_over_sqrt_T", None
    m = _ETA_FIXED.match(raw)
    if not m:
        raise ConfigError("eta_rule", f"expected one_over_sqrt_T or fixed(<value>), got {raw!r}")
    v = _float("eta_rule", m.group(1))
    if v <= 0:
        raise ConfigError("eta_rule", "fixed step must be positive")
    return "fixed", v


def _lines(text: str):
    seen = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(None, f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(key, "unknown key")
        if key in seen:
            raise ConfigError(key, "given more than once")
        if value == "":
            raise ConfigError(key, "empty value")
        seen[key] = value
    return seen


def parse_config(text: str, *, command: str | None = None,
                 output_path: str | None = None) -> ExperimentConfig:
    """Parse and fully validate a config file.

    ``command`` and ``output_path`` come from the command line; a command
    given in the file must agree with it, and ``output_path`` overrides
    the file value.
    """
    raw = _lines(text)

    cmd = raw.get("command", command)
    if cmd is None:
        raise ConfigError("command", "missing required key")
    _choice("command", cmd, COMMANDS)
    if command is not None and cmd != command:
        raise ConfigError("command", f"file says {cmd!r} but {command!r} was requested")

    out = output_path if output_path is not None else raw.get("output_path")
    if out is None:
        raise ConfigError("output_path", "missing required key")

    for key in _REQUIRED[cmd]:
        if key not in raw:
            raise ConfigError(key, "missing required key")

    kw: dict = {"command": cmd, "output_path": out}
    for key in ("d", "n", "T", "K", "Q", "sketch_rows", "sketch_cols",
                "master_seed", "num_trials", "recon_nnz"):
        if key in raw:
            kw[key] = _int(key, raw[key])
    if "algorithm" in raw:
        kw["algorithm"] = _choice("algorithm", raw["algorithm"], ALGORITHMS)
    if "base_transform" in raw:
        kw["base_transform"] = _choice("base_transform", raw["base_transform"], BASES)
    if "eta_rule" in raw:
        kw["eta_rule"], kw["eta_value"] = _eta(raw["eta_rule"])
    if "noise_std" in raw:
        kw["noise_std"] = _float_list("noise_std", raw["noise_std"])
    if "lambdas" in raw:
        kw["lambdas"] = _float_list("lambdas", raw["lambdas"])
    if "recon_sigma" in raw:
        kw["recon_sigma"] = _float("recon_sigma", raw["recon_sigma"])

    cfg = ExperimentConfig(**kw)
    _validate(cfg)
    return cfg


def _validate(c: ExperimentConfig) -> None:
    def need(key, ok, msg):
        if not ok:
            raise ConfigError(key, msg)

    need("d", c.d >= 1, "must be >= 1")
    need("K", 1 <= c.K <= c.d, f"must satisfy 1 <= K <= d = {c.d}")
    need("n", c.n >= 1, "must be >= 1")
    need("T", c.T >= 0, "must be >= 0")
    need("num_trials", c.num_trials >= 1, "must be >= 1")
    need("master_seed", 0 <= c.master_seed < 2 ** 64, "must lie in [0, 2^64)")
    need("noise_std", all(w >= 0 for w in c.noise_std), "must be nonnegative")
    need("recon_sigma", c.recon_sigma >= 0, "must be nonnegative")

    if c.command == "diag":
        need("algorithm", c.algorithm == "cs_sgd", "diag only runs cs_sgd")
    if c.command in ("run", "diag"):
        need("noise_std", len(c.noise_std) == 1, "takes a single value here (use sweep-noise)")

    uses_phi = c.command == "recon-bench" or c.algorithm == "cs_sgd"
    if c.command != "recon-bench" and c.algorithm == "cs_sgd":
        need("Q", c.Q is not None, "missing required key")
    if c.Q is not None:
        need("Q", 1 <= c.Q <= c.d_aug, f"must satisfy 1 <= Q <= d_aug = {c.d_aug}")
    if uses_phi and c.base_transform == "dct":
        need("base_transform", c.d_aug <= DCT_MAX_DIM,
             f"dct is limited to d_aug <= {DCT_MAX_DIM}")

    if c.command != "recon-bench" and c.algorithm == "sketch_sgd":
        need("sketch_rows", c.sketch_rows is not None, "missing required key")
        need("sketch_cols", c.sketch_cols is not None, "missing required key")
    if c.sketch_rows is not None:
        need("sketch_rows", c.sketch_rows >= 1, "must be >= 1")
    if c.sketch_cols is not None:
        need("sketch_cols", c.sketch_cols >= 1, "must be >= 1")

    if c.command == "recon-bench":
        need("lambdas", all(lam >= 1 for lam in c.lambdas), "compression rates must be >= 1")
        if c.recon_nnz is not None:
            need("recon_nnz", 0 <= c.recon_nnz <= c.d, "must lie in [0, d]")
