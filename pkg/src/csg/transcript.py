"""Per-round interaction records with a lossless CSV round-trip."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Transcript:
    """Columnar record; rows are appended by the environment and frozen with `finalize`."""

    m: int
    rounds: list[int] = field(default_factory=list)
    epochs: list[int] = field(default_factory=list)
    h: list[np.ndarray] = field(default_factory=list)
    p: list[np.ndarray] = field(default_factory=list)
    y: list[float] = field(default_factory=list)
    u_p: list[float] = field(default_factory=list)
    u_a: list[float] = field(default_factory=list)
    real_actions: bool = False

    def append(self, epoch: int, h, p, y, u_p: float, u_a: float) -> None:
        self.rounds.append(len(self.rounds) + 1)
        self.epochs.append(int(epoch))
        self.h.append(np.asarray(h, dtype=float).reshape(self.m))
        self.p.append(np.asarray(p, dtype=float).reshape(self.m))
        self.y.append(float(np.atleast_1d(y)[0]) if self.real_actions else int(y))
        self.u_p.append(float(u_p))
        self.u_a.append(float(u_a))

    def __len__(self) -> int:
        return len(self.rounds)

    @property
    def H(self) -> np.ndarray:
        return np.asarray(self.h).reshape(-1, self.m)

    @property
    def P(self) -> np.ndarray:
        return np.asarray(self.p).reshape(-1, self.m)

    @property
    def Y(self) -> np.ndarray:
        return np.asarray(self.y, dtype=float if self.real_actions else int)

    @property
    def UP(self) -> np.ndarray:
        return np.asarray(self.u_p, dtype=float)

    @property
    def UA(self) -> np.ndarray:
        return np.asarray(self.u_a, dtype=float)

    def slice(self, start: int, stop: int) -> "Transcript":
        """Rows start..stop-1 (0-based), renumbered from 1."""
        out = Transcript(self.m, real_actions=self.real_actions)
        for i in range(start, stop):
            out.append(self.epochs[i], self.h[i], self.p[i], self.y[i], self.u_p[i], self.u_a[i])
        return out

    def header(self) -> list[str]:
        return (
            ["round", "epoch"]
            + [f"h_{j}" for j in range(self.m)]
            + [f"p_{j}" for j in range(self.m)]
            + ["y", "u_p", "u_a"]
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for i in range(len(self)):
            y = repr(self.y[i]) if self.real_actions else str(self.y[i])
            w.writerow(
                [self.rounds[i], self.epochs[i]]
                + [repr(float(v)) for v in self.h[i]]
                + [repr(float(v)) for v in self.p[i]]
                + [y, repr(self.u_p[i]), repr(self.u_a[i])]
            )
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.to_csv())
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        return cls.from_csv(Path(path).read_text())

    @classmethod
    def from_csv(cls, text: str) -> "Transcript":
        rows = list(csv.reader(io.StringIO(text)))
        head, body = rows[0], rows[1:]
        m = sum(1 for c in head if c.startswith("h_"))
        expected = ["round", "epoch"] + [f"h_{j}" for j in range(m)] + [f"p_{j}" for j in range(m)] + ["y", "u_p", "u_a"]
        if head != expected:
            raise ValueError(f"unexpected transcript header {head}")
        real = any(("." in r[2 + 2 * m]) or ("e" in r[2 + 2 * m].lower()) for r in body)
        tr = cls(m, real_actions=real)
        for r in body:
            y = float(r[2 + 2 * m]) if real else int(r[2 + 2 * m])
            tr.append(
                int(r[1]),
                [float(v) for v in r[2 : 2 + m]],
                [float(v) for v in r[2 + m : 2 + 2 * m]],
                y,
                float(r[3 + 2 * m]),
                float(r[4 + 2 * m]),
            )
            if tr.rounds[-1] != int(r[0]):
                raise ValueError("round indices must increase from 1")
        return tr
