"""MistConfig and its flat ``key = value`` text format."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

from .graph import EUCLIDEAN, GEODESIC
from .losses import CriticConfig

SYMNCE = "symnce"
PLAINNCE = "plainnce"

# Supported term combinations of the objective (A: VAT, B: H(Y), C: H(Y|X), D: contrastive).
COMBOS = ("D", "BC", "BD", "AD", "ABC", "BCD", "ABCD")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class MistConfig:
    mu: float = 0.1
    eta: float = 15.5
    gamma: float = 10.0
    alpha: float = 1.0
    tau: float = 0.05
    sampler: str = GEODESIC
    k0: int = 15
    beta: float = 0.0
    xi: float = 0.1
    batch_size: int = 250
    epochs: int = 50
    lr: float = 0.002
    seed: int = 0
    variant: str = SYMNCE
    terms: str = "ABCD"
    hidden: tuple = (1200, 1200)
    n_clusters: Optional[int] = None
    eps_scale: float = 0.25
    eps_rank: int = 10
    dtype: str = "float64"
    # multiplies the He-normal std of the softmax layer's weights only
    out_init_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "terms", normalize_combo(self.terms))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        self.validate()

    def validate(self) -> None:
        for key in ("mu", "eta", "gamma"):
            if getattr(self, key) < 0:
                raise ConfigError(key, "must be nonnegative")
        try:
            CriticConfig(self.alpha, self.tau)
        except ValueError as e:
            raise ConfigError("tau", str(e)) from None
        if self.sampler not in (EUCLIDEAN, GEODESIC):
            raise ConfigError("sampler", f"must be {EUCLIDEAN!r} or {GEODESIC!r}")
        if self.k0 < 1:
            raise ConfigError("k0", "must be >= 1")
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta", "must lie in [0, 1)")
        if self.xi <= 0:
            raise ConfigError("xi", "must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size", "must be >= 2")
        if self.epochs < 1:
            raise ConfigError("epochs", "must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr", "must be positive")
        if self.variant not in (SYMNCE, PLAINNCE):
            raise ConfigError("variant", f"must be {SYMNCE!r} or {PLAINNCE!r}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden", "needs at least one positive width")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ConfigError("n_clusters", "must be >= 1")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError("dtype", "must be float64 or float32")
        if self.out_init_scale <= 0:
            raise ConfigError("out_init_scale", "must be positive")

    @property
    def critic(self) -> CriticConfig:
        return CriticConfig(self.alpha, self.tau)

    def weights(self) -> dict:
        """Linear weights of (R_vat, H(Y), H(Y|X), D) in the minimized total."""
        t = self.terms
        return {
            "r_vat": 1.0 if "A" in t else 0.0,
            "h_y": -self.mu * self.eta if "B" in t else 0.0,
            "h_y_given_x": self.mu if "C" in t else 0.0,
            "d_term": self.mu * self.gamma if "D" in t else 0.0,
        }

    def with_(self, **kw) -> "MistConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def normalize_combo(combo) -> str:
    s = "".join(sorted(set(str(combo).upper().replace(",", "").replace("(", "").replace(")", "").replace(" ", ""))))
    if s not in COMBOS:
        raise ConfigError("terms", f"unsupported combination {combo!r}; choose from {', '.join(COMBOS)}")
    return s


_FIELDS = {f.name: f for f in fields(MistConfig)}


def _coerce(key: str, raw: str):
    if key not in _FIELDS:
        raise ConfigError(key, "unknown configuration key")
    raw = raw.strip()
    default = _FIELDS[key].default
    try:
        if key == "hidden":
            return tuple(int(v) for v in raw.replace("-", ",").split(",") if v.strip())
        if key == "n_clusters":
            return None if raw.lower() in ("", "none") else int(raw)
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.lower() if key in ("sampler", "variant", "dtype") else raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None


def parse_overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        k, v = item.split("=", 1)
        k = k.strip()
        out[k] = _coerce(k, v)
    return out


def parse_config_text(text: str, base: Optional[MistConfig] = None) -> MistConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected key = value")
        k, v = line.split("=", 1)
        k = k.strip()
        values[k] = _coerce(k, v)
    return (base or MistConfig()).with_(**values)


def load_config(path, overrides=None) -> MistConfig:
    with open(path, encoding="utf-8") as fh:
        cfg = parse_config_text(fh.read())
    if overrides:
        cfg = cfg.with_(**parse_overrides(overrides))
    return cfg


def format_config(cfg: MistConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if k == "hidden":
            v = ",".join(str(h) for h in v)
        elif v is None:
            v = "none"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# Table-9 configuration for the synthetic benchmarks.
TWO_MOONS = MistConfig()
TWO_RINGS = MistConfig(beta=0.6)

# Ablation weights. "real" follows the per-combination columns for real-world
# data; "synthetic" applies the single Two-Rings column to every combination.
ABLATION_PROFILES = {
    "real": {
        "D": dict(mu=1.0, eta=0.0, gamma=1.0, tau=1.0),
        "BD": dict(mu=1.0, eta=1.0, gamma=10.0, tau=1.0),
        "AD": dict(mu=0.045, gamma=1.5, tau=1.0),
        "BCD": dict(mu=1.0, eta=1.0, gamma=10.0, tau=0.1),
        "ABC": dict(mu=0.1, eta=4.0),
        "BC": dict(mu=1.0, eta=4.0),
    },
    "synthetic": {
        "D": dict(mu=0.1, gamma=10.0, tau=1.0),
        "BD": dict(mu=0.1, eta=15.5, gamma=10.0, tau=1.0),
        "AD": dict(mu=0.1, gamma=10.0, tau=1.0),
        "BCD": dict(mu=0.1, eta=15.5, gamma=10.0, tau=1.0),
        "ABC": dict(mu=0.1, eta=15.5),
        "BC": dict(mu=1.0, eta=15.5),
    },
}


def ablation_config(combo: str, base: MistConfig, profile: str = "synthetic") -> MistConfig:
    combo = normalize_combo(combo)
    if combo == "ABCD":
        return base.with_(terms="ABCD")
    try:
        overrides = ABLATION_PROFILES[profile][combo]
    except KeyError:
        raise ConfigError("profile", f"unknown ablation profile {profile!r}") from None
    return base.with_(terms=combo, **overrides)
