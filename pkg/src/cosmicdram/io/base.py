from __future__ import annotations

import abc
import csv
import io
from collections.abc import Iterator
from pathlib import Path
from typing import IO, Any, Union

from cosmicdram.core.base import CDObject
from cosmicdram.core.exceptions import MalformedRowError
from cosmicdram.utils import parse_timestamp

Source = Union[str, bytes, Path, IO[str], IO[bytes]]


def read_text(source: Source) -> str:
    """
    Get the text content of a source.

    A source can be the content itself (str or bytes), a path to a file or
    a file-like object opened in text or binary mode.
    """
    if isinstance(source, Path):
        return source.read_text()
    if isinstance(source, bytes):
        return source.decode()
    if isinstance(source, str):
        return source
    content = source.read()
    if isinstance(content, bytes):
        content = content.decode()
    return content


class BaseLogIO(CDObject, abc.ABC):
    """Base class for the readers and writers of the input file families.

    Every file is comma separated text with a mandatory header row. Lines
    starting with ``#`` and blank lines are ignored. Rows are parsed one by
    one and errors are reported with their (1-based) line number.
    """

    header: tuple[str, ...]

    def parse(self, source: Source) -> Any:
        """Parse a source into the objects of the data model."""
        objects = []
        for lineno, row in self.iter_rows(source):
            try:
                obj = self._parse_row(row, lineno)
            except MalformedRowError:
                raise
            except (ValueError, KeyError) as e:
                raise MalformedRowError(lineno, str(e)) from e
            self._check_object(obj, lineno)
            objects.append(obj)
        return self._finalize(objects)

    def iter_rows(self, source: Source) -> Iterator[tuple[int, dict[str, str]]]:
        """Iterate over the data rows of a source as (line number, row) pairs."""
        header_seen = False
        for lineno, line in enumerate(read_text(source).splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = next(csv.reader([line]))
            fields = [f.strip() for f in fields]
            if not header_seen:
                if tuple(fields) != self.header:
                    raise MalformedRowError(
                        lineno,
                        f"expected header {','.join(self.header)!r}, got {stripped!r}",
                    )
                header_seen = True
                continue
            if len(fields) != len(self.header):
                raise MalformedRowError(
                    lineno,
                    f"expected {len(self.header)} fields, got {len(fields)}",
                )
            yield lineno, dict(zip(self.header, fields))
        if not header_seen:
            raise MalformedRowError(None, "missing header row")

    def dump(self, objects: Any) -> str:
        """Serialize objects back to the file schema."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.header)
        for obj in self._iter_objects(objects):
            writer.writerow(self._format_row(obj))
        return buffer.getvalue()

    @abc.abstractmethod
    def _parse_row(self, row: dict[str, str], lineno: int) -> Any:
        pass

    @abc.abstractmethod
    def _format_row(self, obj: Any) -> list[str]:
        pass

    def _check_object(self, obj: Any, lineno: int) -> None:
        """Hook for checks involving previously parsed rows."""

    def _finalize(self, objects: list) -> Any:
        return objects

    def _iter_objects(self, objects: Any) -> Iterator:
        return iter(objects)


def parse_int(row: dict[str, str], key: str, optional: bool = False) -> int | None:
    value = row[key]
    if value == "":
        if optional:
            return None
        raise ValueError(f"field {key!r} is empty")
    try:
        return int(value)
    except ValueError:
        raise ValueError(f"field {key!r} is not an integer: {value!r}") from None


def parse_float(row: dict[str, str], key: str) -> float:
    value = row[key]
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"field {key!r} is not a number: {value!r}") from None


def parse_id(row: dict[str, str], key: str) -> str:
    value = row[key]
    if value == "":
        raise ValueError(f"field {key!r} is empty")
    return value


def parse_time(row: dict[str, str], key: str) -> Any:
    try:
        return parse_timestamp(row[key])
    except ValueError:
        raise ValueError(f"field {key!r} is not an ISO-8601 timestamp: {row[key]!r}") from None


def format_optional(value: Any) -> str:
    return "" if value is None else str(value)


def format_float(value: float) -> str:
    return repr(float(value))
