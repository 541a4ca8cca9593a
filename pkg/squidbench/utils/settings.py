from pydantic import (
    ConfigDict,
    with_config,
)

# every dataclass a YAML file can reach rejects keys it does not declare
settings_section = with_config(ConfigDict(extra="forbid"))
