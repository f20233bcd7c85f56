"""Exception hierarchy shared by all tflparity modules."""

from __future__ import annotations


class TflParityError(Exception):
    """Base class for every error raised by this package."""


# -- IR -----------------------------------------------------------------------

class SchemaError(TflParityError, ValueError):
    """A field is missing, extra, or of the wrong type.

    ``path`` points at the offending field, e.g. ``cells[3].cell_type``.
    """

    def __init__(self, message: str, path: str = "") -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ValidityError(TflParityError):
    """A grid parsed cleanly but violates one or more validity rules."""

    def __init__(self, report) -> None:
        self.report = report
        rules = sorted({v.rule.value for v in report.violations})
        super().__init__(f"grid violates {', '.join(rules)} ({len(report.violations)} violation(s))")


class InvalidGrid(ValidityError):
    """Raised by renderers when handed an invalid grid."""


class MappingAmbiguous(TflParityError):
    def __init__(self, row_id: int, col_id: int, count: int) -> None:
        self.row_id, self.col_id, self.count = row_id, col_id, count
        super().__init__(f"cell ({row_id}, {col_id}) maps to {count} source records")


class UnmappedRecord(TflParityError):
    def __init__(self, record) -> None:
        self.record = record
        super().__init__(
            f"record ({record.group!r}, {record.treatment!r}, {record.stat_name!r}) "
            "has no place in the mapping"
        )


class SpecRowMissing(TflParityError):
    def __init__(self, row_id: int) -> None:
        self.row_id = row_id
        super().__init__(f"hierarchy spec references row {row_id}, absent from grid")


# -- RTF ----------------------------------------------------------------------

class RtfError(TflParityError):
    pass


class NotRtf(RtfError):
    def __init__(self) -> None:
        super().__init__("input does not begin with '{\\rtf'")


class UnbalancedGroup(RtfError):
    def __init__(self, offset: int, detail: str) -> None:
        self.offset = offset
        super().__init__(f"unbalanced group at byte {offset}: {detail}")


# -- bridge map ---------------------------------------------------------------

class BridgeMapError(TflParityError):
    pass


class ParseError(BridgeMapError):
    pass


class DuplicateLegacyId(BridgeMapError):
    def __init__(self, legacy_id: str) -> None:
        self.legacy_id = legacy_id
        super().__init__(f"duplicate legacy_id {legacy_id!r}")


class MissingRequiredField(BridgeMapError):
    def __init__(self, field: str, entry_index: int) -> None:
        self.field, self.entry_index = field, entry_index
        super().__init__(f"entry #{entry_index} is missing required field {field!r}")


class ResolutionError(BridgeMapError):
    """Base for parameter resolution failures (triaged as PARAMETER errors)."""


class NameTooLong(ResolutionError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"parameter name {name!r} exceeds 32 characters ({len(name)})")


class InvalidIdentifier(ResolutionError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"{name!r} is not a valid SAS name")


class UnmappedLegacyParameter(ResolutionError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"legacy parameter {name!r} has no parameter_mapping entry")


# -- compare / synth / gates / audit ------------------------------------------

class DegenerateTable(TflParityError):
    pass


class CategoryNotApplicable(TflParityError):
    pass


class ConfigError(TflParityError):
    pass


class MissingInput(TflParityError, FileNotFoundError):
    def __init__(self, path) -> None:
        self.path = str(path)
        super().__init__(f"manifest input missing: {path}")
