"""Run-configuration file loading.

One declarative JSON file carries the endpoint definitions and the
component routing table; secrets stay in environment variables named by
`api_key_env`. Example:

    {
      "endpoints": {
        "cq": {"base_url": "http://localhost:8000/v1", "model_id": "my-model",
                "api_key_env": "MY_KEY", "temperature": 0.0, "max_tokens": 512}
      },
      "routing": {"linking": "cq", "admin": "cq", "generation": "cq", "debugging": "cq"},
      "defaults": {"num_shuffles": 5, "concurrency": 4, "execution_timeout": 30.0}
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .backend import Component, ModelEndpoint, RoutingConfig
from .errors import ConfigError

_ENDPOINT_FIELDS = {
    "base_url", "model_id", "api_key_env", "temperature", "max_tokens",
    "timeout", "max_retries", "max_concurrency",
}


@dataclass(frozen=True)
class RunConfig:
    routing: RoutingConfig
    defaults: dict = field(default_factory=dict)


def mock_routing() -> RoutingConfig:
    """Single-endpoint routing for offline mock runs."""
    return RoutingConfig.single(
        ModelEndpoint(name="mock", base_url="mock://local", model_id="mock")
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc

    endpoints_raw = raw.get("endpoints")
    routing_raw = raw.get("routing")
    if not isinstance(endpoints_raw, dict) or not endpoints_raw:
        raise ConfigError(f"{path}: 'endpoints' must be a non-empty object")
    if not isinstance(routing_raw, dict):
        raise ConfigError(f"{path}: 'routing' must be an object")

    endpoints: dict[str, ModelEndpoint] = {}
    for name, spec in endpoints_raw.items():
        unknown = set(spec) - _ENDPOINT_FIELDS
        if unknown:
            raise ConfigError(f"{path}: endpoint {name!r} has unknown fields {sorted(unknown)}")
        if "base_url" not in spec or "model_id" not in spec:
            raise ConfigError(f"{path}: endpoint {name!r} needs base_url and model_id")
        try:
            endpoints[name] = ModelEndpoint(name=name, **spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: endpoint {name!r}: {exc}") from exc

    slots = {}
    for component in Component:
        endpoint_name = routing_raw.get(component.value)
        if endpoint_name is None:
            raise ConfigError(f"{path}: routing lacks the {component.value!r} slot")
        if endpoint_name not in endpoints:
            raise ConfigError(
                f"{path}: routing slot {component.value!r} names unknown endpoint {endpoint_name!r}"
            )
        slots[component.value] = endpoints[endpoint_name]
    defaults = raw.get("defaults", {})
    if not isinstance(defaults, dict):
        raise ConfigError(f"{path}: 'defaults' must be an object")
    return RunConfig(routing=RoutingConfig(**slots), defaults=defaults)
