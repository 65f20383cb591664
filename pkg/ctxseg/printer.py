from abc import ABC, abstractmethod
from typing import Iterable, List, Mapping, Sequence

from rich.console import Console
from rich.live import Live
from rich.table import Table
from typer import secho

Row = Mapping[str, object]


def _cell(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


class Printer(ABC):
    """
    Renders rows of named values, either as they arrive (training
    progress) or all at once (metric summaries).
    """

    console = Console()

    @abstractmethod
    def live_print(self, rows: Iterable[Row], columns: Sequence[str]) -> List[Row]:
        pass

    @abstractmethod
    def static_print(self, rows: Sequence[Row], columns: Sequence[str], title: str = "") -> None:
        pass

    def __call__(self, rows: Iterable[Row], columns: Sequence[str], live: bool = True) -> List[Row]:
        if live:
            return self.live_print(rows, columns)
        with self.console.status("[bold green]Running..."):
            collected = list(rows)
        self.static_print(collected, columns)
        return collected


class TablePrinter(Printer):
    def __init__(self, color: str, tail: int = 20) -> None:
        self.console = Console()
        self.color = color
        self.tail = tail

    def _table(self, rows: Sequence[Row], columns: Sequence[str], title: str = "") -> Table:
        table = Table(title=title or None, header_style=f"bold {self.color}")
        for column in columns:
            table.add_column(column, justify="right")
        for row in rows:
            table.add_row(*(_cell(row.get(c, "")) for c in columns))
        return table

    def live_print(self, rows: Iterable[Row], columns: Sequence[str]) -> List[Row]:
        collected: List[Row] = []
        with Live(console=self.console) as live:
            for row in rows:
                collected.append(row)
                live.update(self._table(collected[-self.tail :], columns), refresh=True)
        return collected

    def static_print(self, rows: Sequence[Row], columns: Sequence[str], title: str = "") -> None:
        self.console.print(self._table(rows, columns, title))


class TextPrinter(Printer):
    def __init__(self, color: str) -> None:
        self.color = color

    @staticmethod
    def _line(row: Row, columns: Sequence[str]) -> str:
        return "  ".join(f"{c}={_cell(row.get(c, ''))}" for c in columns)

    def live_print(self, rows: Iterable[Row], columns: Sequence[str]) -> List[Row]:
        collected: List[Row] = []
        for row in rows:
            collected.append(row)
            secho(self._line(row, columns), fg=self.color)
        return collected

    def static_print(self, rows: Sequence[Row], columns: Sequence[str], title: str = "") -> None:
        if title:
            secho(title, fg=self.color, bold=True)
        for row in rows:
            secho(self._line(row, columns), fg=self.color)


def get_printer(prettify: bool, color: str) -> Printer:
    return TablePrinter(color) if prettify else TextPrinter(color)

