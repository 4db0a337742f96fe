from dataclasses import dataclass, field, fields, replace

from miniform import hooks
from miniform.utils import MiniformError, throw

_INT_FIELDS = (
    "max_term_size",
    "sort_buffer",
    "sort_patches",
    "merge_fan_in",
    "bracket_index_cap",
    "repeat_limit",
    "threads",
)


@dataclass
class RunConfig:
    """
    Everything one run of the kernel needs to know before it starts.

    Values come from, in increasing priority:
    - hooks.setup_defaults
    - a setup file (`<key> <value>` lines)
    - command line flags
    """

    program: str = None
    include_path: list = field(default_factory=list)
    max_term_size: int = hooks.setup_defaults["max_term_size"]
    sort_buffer: int = hooks.setup_defaults["sort_buffer"]
    sort_patches: int = hooks.setup_defaults["sort_patches"]
    merge_fan_in: int = hooks.setup_defaults["merge_fan_in"]
    bracket_index_cap: int = hooks.setup_defaults["bracket_index_cap"]
    spill_dir: str = hooks.setup_defaults["spill_dir"]
    repeat_limit: int = hooks.setup_defaults["repeat_limit"]
    threads: int = hooks.setup_defaults["threads"]
    statistics: bool = hooks.setup_defaults["statistics"]
    log: bool = False
    defines: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in _INT_FIELDS:
            value = getattr(self, name)
            if value is None and name == "sort_buffer":
                continue
            if not isinstance(value, int) or value < 1:
                throw(f"Setup value {name} must be a positive integer, got {value!r}")
        if self.merge_fan_in < 2:
            throw("Setup value merge_fan_in must be at least 2")

    def search_path(self):
        """Include path with the bundled procedure library appended."""
        return [*self.include_path, hooks.library_dir]

    def with_overrides(self, **overrides):
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **overrides)


def parse_setup(text, source="setup"):
    """Parse setup-file text into a dict of RunConfig field values."""
    known = {f.name for f in fields(RunConfig)}
    values = {}

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("*") or line.startswith("#"):
            continue

        parts = line.split(None, 1)
        if len(parts) != 2:
            throw(f"Setup line needs a key and a value: {line}", file=source, line=number)

        key, value = parts[0].lower(), parts[1].strip()
        name = hooks.setup_aliases.get(key, key)
        if name not in known:
            throw(f"Unknown setup parameter {parts[0]}", file=source, line=number)

        if name == "include_path":
            values.setdefault("include_path", []).extend(p for p in value.split(":") if p)
        elif name in _INT_FIELDS:
            try:
                values[name] = int(value)
            except ValueError:
                throw(f"Setup value for {parts[0]} is not an integer: {value}", file=source, line=number)
        elif name in ("statistics", "log"):
            values[name] = value.lower() in ("1", "on", "yes", "true")
        else:
            values[name] = value

    return values


def load_setup(path):
    try:
        with open(path, encoding="utf-8") as handle:
            return parse_setup(handle.read(), source=path)
    except OSError as e:
        raise MiniformError(f"Cannot read setup file {path}: {e.strerror}") from e
