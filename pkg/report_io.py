# -*- coding: utf-8 -*-
"""
データセットの読み込みとレポート文書（JSON）の書き出し
"""
from __future__ import annotations

import csv
import json
import math
import os
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from errors import DatasetFormatError
from model_core import Dataset
from settings import SCHEMA_VERSION

INTERCEPT_NAME = "(Intercept)"


# ==============================
# データセット
# ==============================

def file_digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def text_digest(obj) -> str:
    canonical = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _read_header(path: Path) -> list[str]:
    with open(path, encoding="utf-8", newline="") as f:
        first = f.readline().rstrip("\r\n")
    if first.strip() == "":
        raise DatasetFormatError(f"{path}: missing header row", row=1)
    names = [c.strip() for c in first.split(",")]
    if any(c == "" for c in names):
        raise DatasetFormatError(f"{path}: empty column name in header", row=1)
    seen = set()
    for c in names:
        if c in seen:
            raise DatasetFormatError(f"{path}: duplicate column {c!r} in header", row=1, column=c)
        seen.add(c)
    return names


def read_dataset(path, response: str) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"data file not found: {path}")

    names = _read_header(path)
    if response not in names:
        raise DatasetFormatError(f"{path}: response column {response!r} not found (columns: {names})", column=response)
    covariates = [c for c in names if c != response]
    if not covariates:
        raise DatasetFormatError(f"{path}: no covariate columns besides {response!r}")

    try:
        df0 = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
            encoding="utf-8",
            skipinitialspace=True,
        )
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DatasetFormatError(f"{path}: cannot parse file: {e}") from None
    df0.columns = names

    if len(df0) < 2:
        raise DatasetFormatError(f"{path}: need at least 2 data rows, got {len(df0)}")

    # 文字列 → 数値。変換できないセルと NaN/inf は行番号（ヘッダー = 1 行目）つきでエラー
    df = pd.DataFrame(index=df0.index)
    for c in names:
        values = pd.to_numeric(df0[c].str.strip(), errors="coerce")
        bad = ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            row = i + 2
            raise DatasetFormatError(
                f"{path}: non-numeric value {df0[c].iloc[i]!r} at row {row}, column {c}", row=row, column=c
            )
        df[c] = values.astype(float)

    return Dataset(y=df[response].to_numpy(), X=df[covariates].to_numpy(), names=tuple(covariates))


def with_intercept(data: Dataset) -> Dataset:
    """先頭に 1 の列を足す（既にあれば何もしない）"""
    if INTERCEPT_NAME in data.names:
        return data
    X = np.column_stack([np.ones(data.n), data.X])
    return Dataset(y=data.y, X=X, names=(INTERCEPT_NAME,) + tuple(data.names))


def resolve_columns(data: Dataset, labels) -> list[int]:
    """列名（または 1 始まりの番号）→ 1 始まりの添字"""
    out = []
    for label in labels:
        label = str(label).strip()
        if label == "":
            continue
        if label in data.names:
            out.append(data.names.index(label) + 1)
        elif label.isdigit() and 1 <= int(label) <= data.p:
            out.append(int(label))
        else:
            raise DatasetFormatError(f"unknown column {label!r} (columns: {list(data.names)})", column=label)
    return out


# ==============================
# レポート
# ==============================

def to_plain(obj):
    """numpy 型や NaN を JSON にできる形へ"""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _float17(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"out of range float value: {x!r}")
    text = format(x, ".17g")
    # "1" のままだと読み戻しで int になる
    return text if ("." in text or "e" in text) else text + ".0"


class Float17Encoder(json.JSONEncoder):
    """float を有効数字 17 桁で書く JSON エンコーダ"""

    def iterencode(self, o, _one_shot=False):
        markers = {} if self.check_circular else None
        encode_str = json.encoder.encode_basestring_ascii if self.ensure_ascii else json.encoder.encode_basestring
        return json.encoder._make_iterencode(
            markers, self.default, encode_str, self.indent, _float17,
            self.key_separator, self.item_separator, self.sort_keys, self.skipkeys, _one_shot,
        )(o, 0)


@dataclass(frozen=True)
class ReportDocument:
    command: list
    input_digest: str
    payload: dict
    timing_ms: float = 0.0
    schema: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "command": list(self.command),
            "input_digest": self.input_digest,
            "timing_ms": self.timing_ms,
            "payload": to_plain(self.payload),
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), cls=Float17Encoder, indent=2, ensure_ascii=False)

    @classmethod
    def parse(cls, text: str) -> "ReportDocument":
        raw = json.loads(text)
        return cls(
            command=raw["command"],
            input_digest=raw["input_digest"],
            payload=raw["payload"],
            timing_ms=raw.get("timing_ms", 0.0),
            schema=raw["schema"],
        )


def ensure_parent_dir(filepath: str) -> None:
    parent = os.path.dirname(filepath)
    if parent and not os.path.exists(parent):
        os.makedirs(parent, exist_ok=True)


def write_report(text: str, out_path: str | None) -> None:
    if out_path is None:
        return
    ensure_parent_dir(out_path)
    Path(out_path).write_text(text + "\n", encoding="utf-8")


# ==============================
# 人が読む表（--pretty）
# ==============================

def _selection_table(payload: dict) -> str:
    kinds = payload["criteria"]
    rows = []
    for r in payload["rows"]:
        row = {"model": r["label"], "k": r["k"]}
        for kind in kinds:
            row[kind] = r["criteria"].get(kind)
        row["reason"] = r["reason"] or ""
        rows.append(row)
    table = pd.DataFrame(rows)
    winners = pd.DataFrame([
        {"criterion": kind, "winner": (w or {}).get("label"), "value": (w or {}).get("value")}
        for kind, w in payload["winners"].items()
    ])
    return table.to_string(index=False) + "\n\n" + winners.to_string(index=False)


def render_pretty(document: ReportDocument, command: str) -> str:
    payload = to_plain(document.payload)
    parts = [f"# {document.schema}  {' '.join(document.command)}", f"# input {document.input_digest}"]

    if command == "select":
        parts.append(_selection_table(payload))
    elif command == "fit":
        fit = payload["fit"]
        keys = ["label", "k", "family", "theta_hat", "sigma2_reml", "sigma2_mle", "resid_loglik"]
        kv = pd.Series({key: payload.get(key, fit.get(key)) for key in keys})
        parts.append(kv.to_string())
        parts.append(pd.Series(payload["criteria"], dtype=object).to_string())
    elif command == "simulate":
        parts.append(pd.DataFrame(payload["rates"]).to_string(index=False))
    elif command == "verify":
        parts.append(pd.DataFrame(payload["identities"]).to_string(index=False))
        parts.append(pd.DataFrame(payload["distributions"]).to_string(index=False))
    elif command == "oracle":
        for population in payload["populations"]:
            for target in ("residual", "likelihood"):
                block = population[target]
                parts.append(f"[n={population['n']} {target}] winner = {block['winner']}")
                parts.append(pd.DataFrame(block["rows"]).to_string(index=False))
    else:
        parts.append(json.dumps(payload, indent=2))
    return "\n\n".join(parts)
