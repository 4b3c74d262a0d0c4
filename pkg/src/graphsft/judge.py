"""Pairwise LLM-judge evaluation with win-rate aggregation.

Two answer sources are compared per query on four metrics. Each trial asks
the judge twice, once per presentation order, to cancel position bias: a
trial's winner is A or B only when both orders agree after order-unmapping,
otherwise the trial is a tie. Ties earn 0.5 win credit in aggregation.

The report mirrors the usual win-rate table shape: one row per metric plus
an Overall row, columns Local / Global / Overall. Metric overalls pool wins
over pooled totals across scopes; the grand overall is the unweighted mean
of the four pooled metric rates.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .backend import BackendProfile, PromptRequest, complete
from .errors import KeyMismatch, MissingItem
from .templates import load_prompt

logger = logging.getLogger(__name__)

METRICS = ("helpful", "rich", "insightful", "user_friendly")
SCOPES = ("local", "global")

METRIC_DEFINITIONS = {
    "helpful": (
        "how accurately, relevantly, and usefully the answer addresses the "
        "question; correct answers with practical value score higher"
    ),
    "rich": (
        "how comprehensive and deep the answer is, and how many distinct "
        "perspectives or angles it covers"
    ),
    "insightful": (
        "how deep the understanding behind the answer is, and whether it "
        "offers original or perceptive interpretations beyond surface facts"
    ),
    "user_friendly": (
        "how clear, coherent, well-organized, and easy to read the answer is"
    ),
}

_WINNER_RE = re.compile(r"WINNER:\s*([AB])", re.IGNORECASE)


@dataclass(frozen=True)
class EvalItem:
    query_id: str
    scope: str
    query: str
    reference: str
    answer_a: str
    answer_b: str

    def __post_init__(self) -> None:
        for name in ("query", "reference", "answer_a", "answer_b"):
            if not getattr(self, name):
                raise ValueError(f"EvalItem.{name} must be nonempty")
        if self.scope not in SCOPES:
            raise ValueError(f"scope must be one of {SCOPES}")


@dataclass(frozen=True)
class JudgeVerdict:
    """Outcome of one trial (both presentation orders, unmapped)."""

    query_id: str
    metric: str
    trial: int
    winner: str  # "A" | "B" | "tie"
    replies: tuple[str, str] = ("", "")  # raw replies for orders (AB, BA)


@dataclass(frozen=True)
class Cell:
    wins_a: float
    total: int

    @property
    def rate(self) -> float:
        return self.wins_a / self.total


@dataclass
class WinRateReport:
    cells: dict[tuple[str, str], Cell] = field(default_factory=dict)
    metric_overall: dict[str, Cell] = field(default_factory=dict)
    scope_overall: dict[str, float] = field(default_factory=dict)
    grand_overall: Optional[float] = None


def _decode_winner(reply: str) -> Optional[str]:
    matches = _WINNER_RE.findall(reply)
    return matches[-1].upper() if matches else None


def _ask_once(
    item: EvalItem, metric: str, order: str, profile: BackendProfile, trial: int
) -> tuple[Optional[str], str]:
    """One judged comparison in one presentation order.

    Returns (winner in original labels or None on abstention, raw reply).
    An unparsable reply is re-asked once before abstaining.
    """
    first, second = (
        (item.answer_a, item.answer_b) if order == "AB" else (item.answer_b, item.answer_a)
    )
    prompt = load_prompt("judge_prompt").format(
        metric_name=metric.replace("_", "-"),
        metric_definition=METRIC_DEFINITIONS[metric],
        query=item.query,
        reference=item.reference,
        answer_a=first,
        answer_b=second,
    )
    raw = ""
    for attempt in range(2):
        request = PromptRequest(
            system_text="You judge which of two answers is better.",
            user_text=prompt,
            temperature=0.0,
            max_output_tokens=256,
            tag=f"judge:{item.query_id}:{metric}:{trial}:{order}:{attempt}",
        )
        raw = complete(profile, request).text
        presented = _decode_winner(raw)
        if presented is not None:
            if order == "AB":
                return presented, raw
            return ("B" if presented == "A" else "A"), raw
    logger.warning(
        "unparsable judge reply for %s/%s trial %d order %s; abstaining",
        item.query_id, metric, trial, order,
    )
    return None, raw


def judge_pair(
    item: EvalItem, metric: str, trials: int, profile: BackendProfile
) -> list[JudgeVerdict]:
    """Run ``trials`` double-order judgments of one item on one metric."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")

    verdicts: list[JudgeVerdict] = []
    for trial in range(trials):
        ab_winner, ab_raw = _ask_once(item, metric, "AB", profile, trial)
        ba_winner, ba_raw = _ask_once(item, metric, "BA", profile, trial)
        if ab_winner is not None and ab_winner == ba_winner:
            winner = ab_winner
        else:
            winner = "tie"
        verdicts.append(
            JudgeVerdict(
                query_id=item.query_id,
                metric=metric,
                trial=trial,
                winner=winner,
                replies=(ab_raw, ba_raw),
            )
        )
    return verdicts


def aggregate(
    verdicts: Sequence[JudgeVerdict], items: Sequence[EvalItem]
) -> WinRateReport:
    """Fold verdicts into per-(metric, scope) win rates and pooled overalls.

    Per query and metric, the win contribution is (wins + 0.5 * ties) /
    trials, so each query weighs equally regardless of trial count.
    """
    by_id = {item.query_id: item for item in items}

    grouped: dict[tuple[str, str], list[str]] = {}
    for verdict in verdicts:
        if verdict.query_id not in by_id:
            raise MissingItem(f"no eval item for query_id {verdict.query_id}")
        grouped.setdefault((verdict.query_id, verdict.metric), []).append(
            verdict.winner
        )

    wins: dict[tuple[str, str], float] = {}
    totals: dict[tuple[str, str], int] = {}
    for (query_id, metric), winners in grouped.items():
        scope = by_id[query_id].scope
        n_a = sum(1 for w in winners if w == "A")
        n_tie = sum(1 for w in winners if w == "tie")
        contribution = (n_a + 0.5 * n_tie) / len(winners)
        key = (metric, scope)
        wins[key] = wins.get(key, 0.0) + contribution
        totals[key] = totals.get(key, 0) + 1

    report = WinRateReport()
    for key, total in totals.items():
        report.cells[key] = Cell(wins_a=wins[key], total=total)

    for metric in METRICS:
        pooled_wins = sum(
            report.cells[(metric, s)].wins_a
            for s in SCOPES
            if (metric, s) in report.cells
        )
        pooled_total = sum(
            report.cells[(metric, s)].total
            for s in SCOPES
            if (metric, s) in report.cells
        )
        if pooled_total:
            report.metric_overall[metric] = Cell(pooled_wins, pooled_total)

    for scope in SCOPES:
        rates = [
            report.cells[(m, scope)].rate
            for m in METRICS
            if (m, scope) in report.cells
        ]
        if rates:
            report.scope_overall[scope] = sum(rates) / len(rates)

    if report.metric_overall:
        pooled_rates = [cell.rate for cell in report.metric_overall.values()]
        report.grand_overall = sum(pooled_rates) / len(pooled_rates)
    return report


def concordance(
    judge_winners: Mapping[str, str], human_winners: Mapping[str, str]
) -> tuple[int, int, float]:
    """Exact agreement count between judge and human winner labels."""
    if set(judge_winners) != set(human_winners):
        raise KeyMismatch("judge and human winner maps cover different query ids")
    if not judge_winners:
        raise KeyMismatch("winner maps are empty")
    agreements = sum(
        1 for qid, winner in judge_winners.items() if human_winners[qid] == winner
    )
    total = len(judge_winners)
    return agreements, total, agreements / total


# --- rendering -------------------------------------------------------------

def _fmt(rate: Optional[float]) -> str:
    return "n/a" if rate is None else f"{rate * 100:.2f}%"


def render_report(report: WinRateReport) -> str:
    """Render the metric x scope table, percentages to two decimals."""
    header = f"{'Metric':<14}{'Local':>10}{'Global':>10}{'Overall':>10}"
    rows = [header, "-" * len(header)]
    for metric in METRICS:
        local = report.cells.get((metric, "local"))
        global_ = report.cells.get((metric, "global"))
        overall = report.metric_overall.get(metric)
        rows.append(
            f"{metric.replace('_', '-'):<14}"
            f"{_fmt(local.rate if local else None):>10}"
            f"{_fmt(global_.rate if global_ else None):>10}"
            f"{_fmt(overall.rate if overall else None):>10}"
        )
    rows.append(
        f"{'Overall':<14}"
        f"{_fmt(report.scope_overall.get('local')):>10}"
        f"{_fmt(report.scope_overall.get('global')):>10}"
        f"{_fmt(report.grand_overall):>10}"
    )
    return "\n".join(rows)


def report_to_json(report: WinRateReport) -> str:
    payload = {
        "cells": {
            f"{metric}/{scope}": {
                "wins_a": cell.wins_a, "total": cell.total, "rate": cell.rate,
            }
            for (metric, scope), cell in sorted(report.cells.items())
        },
        "metric_overall": {
            metric: {
                "wins_a": cell.wins_a, "total": cell.total, "rate": cell.rate,
            }
            for metric, cell in sorted(report.metric_overall.items())
        },
        "scope_overall": dict(sorted(report.scope_overall.items())),
        "grand_overall": report.grand_overall,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def report_from_json(text: str) -> WinRateReport:
    payload = json.loads(text)
    report = WinRateReport()
    for key, cell in payload["cells"].items():
        metric, _, scope = key.partition("/")
        report.cells[(metric, scope)] = Cell(cell["wins_a"], cell["total"])
    for metric, cell in payload["metric_overall"].items():
        report.metric_overall[metric] = Cell(cell["wins_a"], cell["total"])
    report.scope_overall = dict(payload["scope_overall"])
    report.grand_overall = payload["grand_overall"]
    return report
