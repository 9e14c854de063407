"""Experiment configuration: flat key=value files mirrored by CLI flags.

Config files hold one key=value pair per line (# starts a comment); keys use
the flag spelling with underscores, subdomains as "RxC".  CLI flags override
file values, which override the defaults below.
"""

from dataclasses import dataclass, fields, replace

METHODS = ("newton", "newton-eps", "newton-ras", "newton-ras-eps",
           "raspen", "raspen-eps")
LINEAR_SOLVERS = ("auto", "direct", "gmres")


class ConfigError(ValueError):
    """Invalid experiment configuration or config file."""


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "newton-eps"
    n: int = 64
    s1: int = 1
    s2: int = 1
    overlap: int = 2
    eps0: float = 1.0
    gamma: float = 0.2
    eps_min: float = 1e-10
    tol: float = 1e-10
    sigma: float = 1.1
    inner_tol: float = 1e-8
    kappa: float = 0.1
    nu: float = 1e-6
    mu: float = 1.0
    k_tilde: int = 5
    seed: int = 0
    threads: int = 1
    linear_solver: str = "auto"
    gmres_tol: float = 1e-8
    max_outer: int = 200

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; "
                              f"choose from {', '.join(METHODS)}")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ConfigError(f"unknown linear solver {self.linear_solver!r}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.s1 < 1 or self.s2 < 1:
            raise ConfigError("subdomain counts must be at least 1")
        if self.overlap < 0:
            raise ConfigError("overlap must be nonnegative")
        if not self.eps0 >= self.eps_min > 0:
            raise ConfigError("need eps0 >= eps_min > 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.tol <= 0 or self.inner_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.sigma < 1.0:
            raise ConfigError("sigma must be at least 1")
        if self.nu <= 0 or self.mu <= 0:
            raise ConfigError("nu and mu must be positive")
        if self.threads < 0:
            raise ConfigError("threads must be nonnegative")
        if self.max_outer < 0:
            raise ConfigError("max_outer must be nonnegative")
        if self.uses_ras and self.linear_solver == "direct":
            raise ConfigError(f"method {self.method} preconditions GMRES; "
                              "a direct linear solver is incompatible")
        if self.is_raspen and self.linear_solver == "direct":
            raise ConfigError("raspen solves its outer system matrix-free; "
                              "a direct linear solver is incompatible")

    @property
    def uses_ras(self):
        return self.method in ("newton-ras", "newton-ras-eps")

    @property
    def is_raspen(self):
        return self.method in ("raspen", "raspen-eps")

    @property
    def uses_continuation(self):
        return self.method.endswith("-eps")

    @property
    def subdomains(self):
        return f"{self.s1}x{self.s2}"


_INT_KEYS = {"n", "overlap", "k_tilde", "seed", "threads", "max_outer"}
_FLOAT_KEYS = {"eps0", "gamma", "eps_min", "tol", "sigma", "inner_tol",
               "kappa", "nu", "mu", "gmres_tol"}
_STR_KEYS = {"method", "linear_solver"}


def parse_subdomains(text):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"subdomains must look like 2x2, got {text!r}")
    try:
        s1, s2 = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise ConfigError(f"subdomains must look like 2x2, got {text!r}") from exc
    return s1, s2


def _convert(key, value):
    try:
        if key in _INT_KEYS:
            return {key: int(value)}
        if key in _FLOAT_KEYS:
            return {key: float(value)}
        if key in _STR_KEYS:
            return {key: value}
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    if key == "subdomains":
        s1, s2 = parse_subdomains(value)
        return {"s1": s1, "s2": s2}
    raise ConfigError(f"unknown config key {key!r}")


def load_config_file(path):
    """Parse a key=value config file into a field dict (no validation yet)."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values.update(_convert(key, value))
    return values


def build_config(file_values=None, overrides=None):
    """Defaults, then config file values, then CLI overrides; validates."""
    merged = {}
    merged.update(file_values or {})
    merged.update(overrides or {})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return ExperimentConfig(**merged)


def config_to_text(cfg):
    """Flat key=value rendering that load_config_file parses back exactly."""
    lines = [
        f"method = {cfg.method}",
        f"n = {cfg.n}",
        f"subdomains = {cfg.subdomains}",
        f"overlap = {cfg.overlap}",
        f"eps0 = {cfg.eps0!r}",
        f"gamma = {cfg.gamma!r}",
        f"eps_min = {cfg.eps_min!r}",
        f"tol = {cfg.tol!r}",
        f"sigma = {cfg.sigma!r}",
        f"inner_tol = {cfg.inner_tol!r}",
        f"kappa = {cfg.kappa!r}",
        f"nu = {cfg.nu!r}",
        f"mu = {cfg.mu!r}",
        f"k_tilde = {cfg.k_tilde}",
        f"seed = {cfg.seed}",
        f"threads = {cfg.threads}",
        f"linear_solver = {cfg.linear_solver}",
        f"gmres_tol = {cfg.gmres_tol!r}",
        f"max_outer = {cfg.max_outer}",
    ]
    return "\n".join(lines) + "\n"


def config_to_dict(cfg):
    """JSON-friendly echo of every config field for report emission."""
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def with_updates(cfg, **kwargs):
    return replace(cfg, **kwargs)
