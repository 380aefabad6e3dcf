"""Exception types shared across the package."""


class LinksqlError(Exception):
    """Base class for all package errors."""


class NotADatabaseError(LinksqlError):
    """File exists but is not a SQLite database."""

    def __init__(self, path, message):
        super().__init__(f"{path}: not a SQLite database ({message})")
        self.path = str(path)
        self.message = message


class IntrospectionError(LinksqlError):
    """Database opened but its schema could not be read."""

    def __init__(self, path, message):
        super().__init__(f"{path}: introspection failed ({message})")
        self.path = str(path)
        self.message = message


class UnknownTableError(LinksqlError):
    """A table name does not resolve in the schema."""

    def __init__(self, name):
        super().__init__(f"unknown table: {name}")
        self.name = name


class ParseError(LinksqlError):
    """A benchmark file could not be parsed."""


class MissingDatabaseError(LinksqlError):
    """A question references a database directory that does not exist."""

    def __init__(self, db_id, path):
        super().__init__(f"missing database {db_id!r} (expected at {path})")
        self.db_id = db_id
        self.path = str(path)


class UnparseableGoldSQLError(LinksqlError):
    """Gold SQL could not be tokenized into table references."""


class TransportError(LinksqlError):
    """A completion request failed after exhausting retries."""


class AuthMissingError(LinksqlError):
    """The configured API-key environment variable is not set."""

    def __init__(self, env_name):
        super().__init__(f"API key environment variable {env_name!r} is not set")
        self.env_name = env_name


class BadResponseError(LinksqlError):
    """The completion endpoint returned an unparseable body."""


class LinkingFailedError(LinksqlError):
    """Every shuffle round of a linking call failed."""


class ConfigError(LinksqlError):
    """A run configuration file is invalid."""
