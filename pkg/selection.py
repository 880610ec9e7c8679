# -*- coding: utf-8 -*-
"""
候補モデルの列挙と規準ごとの最良モデル選択（全探索のみ）
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from criteria import CriterionKind, criterion_values
from errors import ConfigError, DimensionError, EmptyWinnerError, NotSpdError, PerfectFitError, TooLargeError
from fitting import FittedModel, profile_reml
from model_core import IDENTITY, CandidateModel, Dataset
from settings import MAX_EXHAUSTIVE_P

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateRow:
    model: CandidateModel
    fit: FittedModel | None = None
    values: dict = field(default_factory=dict)
    reason: str | None = None

    @property
    def feasible(self) -> bool:
        return self.fit is not None


@dataclass(frozen=True)
class Winner:
    kind: CriterionKind
    model: CandidateModel
    value: float


@dataclass(frozen=True)
class SelectionReport:
    n: int
    family: str
    kinds: tuple
    names: tuple
    rows: list
    winners: dict

    def winner(self, kind: CriterionKind) -> Winner | None:
        return self.winners.get(kind)

    def to_dict(self) -> dict:
        rows = []
        for row in self.rows:
            rows.append({
                "active": list(row.model.active),
                "label": row.model.label(self.names),
                "k": row.model.k,
                "fit": None if row.fit is None else row.fit.summary(),
                "criteria": {kind.value: value for kind, value in row.values.items()},
                "reason": row.reason,
            })
        winners = {}
        for kind in self.kinds:
            w = self.winners.get(kind)
            winners[kind.value] = None if w is None else {
                "active": list(w.model.active),
                "label": w.model.label(self.names),
                "value": w.value,
            }
        return {
            "n": self.n,
            "family": self.family,
            "names": list(self.names),
            "criteria": [k.value for k in self.kinds],
            "winners": winners,
            "rows": rows,
        }


def enumerate_candidates(p: int, forced=(), max_k: int | None = None) -> list[CandidateModel]:
    if p > MAX_EXHAUSTIVE_P:
        raise TooLargeError(
            f"exhaustive enumeration supports p <= {MAX_EXHAUSTIVE_P}, got p={p}; "
            "restrict the covariates (fewer columns) and use --max-k / forced indices to shrink the search"
        )
    if p < 1:
        raise DimensionError(f"p must be >= 1, got {p}")

    forced_model = CandidateModel.of(forced, p=p)
    max_k = p if max_k is None else max_k
    if max_k > p:
        raise ConfigError(f"max_k={max_k} exceeds p={p}")
    if max_k < forced_model.k:
        raise ConfigError(f"max_k={max_k} is smaller than the forced set {forced_model}")

    free = [j for j in range(1, p + 1) if j not in forced_model.active]
    models = []
    for size in range(0, max_k - forced_model.k + 1):
        for extra in itertools.combinations(free, size):
            models.append(CandidateModel.of(forced_model.active + extra))
    return sorted(models, key=CandidateModel.sort_key)


def _evaluate_row(data: Dataset, family: str, model: CandidateModel, kinds) -> CandidateRow:
    try:
        fit = profile_reml(data, model, family)
    except (NotSpdError, PerfectFitError, DimensionError) as e:
        logger.debug("candidate %s skipped: %s", model, e)
        return CandidateRow(model=model, reason=str(e))

    values, reasons = criterion_values(fit, kinds, data.n)
    reason = "; ".join(reasons.values()) if reasons else None
    return CandidateRow(model=model, fit=fit, values=values, reason=reason)


def pick_winners(rows, kinds, strict: bool = True) -> dict:
    """最小値。同値なら k の小さい方、次に添字の辞書順"""
    winners = {}
    for kind in kinds:
        scored = [r for r in rows if kind in r.values]
        if not scored:
            if strict:
                raise EmptyWinnerError(kind)
            winners[kind] = None
            continue
        best = min(scored, key=lambda r: (r.values[kind], r.model.k, r.model.active))
        winners[kind] = Winner(kind=kind, model=best.model, value=best.values[kind])
    return winners


def select(
    data: Dataset,
    family: str = IDENTITY,
    candidates=None,
    kinds=tuple(CriterionKind),
    strict: bool = True,
    workers: int = 1,
) -> SelectionReport:
    kinds = tuple(kinds)
    if candidates is None:
        candidates = enumerate_candidates(data.p)
    candidates = sorted(candidates, key=CandidateModel.sort_key)
    for model in candidates:
        model.check_range(data.p)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda m: _evaluate_row(data, family, m, kinds), candidates))
    else:
        rows = [_evaluate_row(data, family, m, kinds) for m in candidates]

    skipped = sum(1 for r in rows if not r.feasible)
    if skipped:
        logger.info("%d of %d candidates infeasible", skipped, len(rows))

    return SelectionReport(
        n=data.n,
        family=family,
        kinds=kinds,
        names=data.names,
        rows=rows,
        winners=pick_winners(rows, kinds, strict=strict),
    )
