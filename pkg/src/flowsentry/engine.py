"""Correlation core: rules evaluated over a record stream, keyed contexts
with sliding timeouts, and deterministic expiry."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .ingest import FlowRecord, IngestStats, StreamReset, TailReader, parse_line, ParseError

Bindings = dict[str, str]
Matcher = Callable[[FlowRecord], "Bindings | None"]
Action = Callable[["CorrelationEngine", FlowRecord, Bindings], None]

# Seconds of day. A drop of more than half a day between consecutive
# timestamps is read as a midnight crossing.
_HALF_DAY = 43200
_DAY = 86400


class AddToExpiredError(RuntimeError):
    """Adding a message to a context that already expired is a sequencing
    bug in the caller, never a recoverable condition."""


@dataclass
class Rule:
    id: str
    matcher: Matcher
    actions: list[Action]


@dataclass
class Ruleset:
    rules: list[Rule]

    def __iter__(self):
        return iter(self.rules)


def match_rule(rule: Rule, record: FlowRecord) -> Bindings | None:
    """Evaluate a rule's matcher. None means no match."""
    return rule.matcher(record)


@dataclass(slots=True)
class Context:
    """A correlation bucket keyed by what the messages have in common.

    The deadline slides: each added message resets it to that message's
    engine time plus timeout_value. Expiry evaluates trigger once; on_fire
    runs only if it holds, and the context is gone either way.
    """

    key: Any
    name: str
    timeout_value: float
    trigger: Callable[["Context"], bool]
    on_fire: Callable[["Context"], Any]
    seq: int
    deadline: float = 0.0
    live: bool = True
    messages: list[FlowRecord] = field(default_factory=list)
    evidence: list[str] = field(default_factory=list)


@dataclass
class EngineReport:
    alerts: list[Any] = field(default_factory=list)
    messages_processed: int = 0
    contexts_created: int = 0
    contexts_expired: int = 0
    contexts_fired: int = 0


class BatchClock:
    """Maps time-of-day stamps onto a monotone engine timeline, adding a day
    whenever the stamp falls back across midnight."""

    def __init__(self) -> None:
        self._day = 0
        self._last: int | None = None

    def now_for(self, record: FlowRecord) -> float:
        tod = record.event_time
        if self._last is not None and self._last - tod > _HALF_DAY:
            self._day += 1
        self._last = tod
        return float(self._day * _DAY + tod)


class WallClock:
    """Engine time is arrival time; record timestamps are ignored."""

    def __init__(self, now_fn: Callable[[], float] = time.monotonic):
        self._now_fn = now_fn

    def now(self) -> float:
        return self._now_fn()

    def now_for(self, record: FlowRecord) -> float:
        return self._now_fn()


class CorrelationEngine:
    """Drives rules over records and owns the context store.

    Per-record order is fixed: advance engine time, expire due contexts,
    then evaluate rules in ruleset order. Sinks, when attached, receive
    alerts in the same order they enter the report.
    """

    def __init__(self, ruleset: Ruleset, *, clock: Any = None, sinks: Any = None):
        self.ruleset = ruleset
        self.clock = clock if clock is not None else BatchClock()
        self.sinks = sinks
        self.report = EngineReport()
        self._contexts: dict[Any, Context] = {}
        self._expiry: list[tuple[float, int, Context]] = []
        self._next_seq = 0
        self._now = 0.0

    @property
    def now(self) -> float:
        return self._now

    def live_contexts(self) -> list[Context]:
        return list(self._contexts.values())

    def find_context(self, key: Any) -> Context | None:
        return self._contexts.get(key)

    def emit(self, item: Any, *, record: bool = True) -> None:
        if record:
            self.report.alerts.append(item)
        if self.sinks is not None:
            self.sinks.emit(item)

    def ensure_context(
        self,
        key: Any,
        *,
        name: str,
        timeout_value: float,
        trigger: Callable[[Context], bool],
        on_fire: Callable[[Context], Any],
    ) -> Context:
        """Return the live context for key, creating it if absent."""
        ctx = self._contexts.get(key)
        if ctx is not None:
            return ctx
        ctx = Context(
            key=key,
            name=name,
            timeout_value=timeout_value,
            trigger=trigger,
            on_fire=on_fire,
            seq=self._next_seq,
            deadline=self._now + timeout_value,
        )
        self._next_seq += 1
        self._contexts[key] = ctx
        heapq.heappush(self._expiry, (ctx.deadline, ctx.seq, ctx))
        self.report.contexts_created += 1
        return ctx

    def add_to_context(self, ctx: Context, message: FlowRecord, formatted: str) -> Context:
        """Append a message and slide the deadline to now + timeout_value."""
        if not ctx.live:
            raise AddToExpiredError(f"context {ctx.name!r} already expired")
        ctx.messages.append(message)
        ctx.evidence.append(formatted)
        deadline = self._now + ctx.timeout_value
        if deadline != ctx.deadline:
            ctx.deadline = deadline
            heapq.heappush(self._expiry, (deadline, ctx.seq, ctx))
        return ctx

    def expire_contexts(self, now: float) -> list[Any]:
        """Remove every context whose deadline is <= now, firing triggers.

        Contexts due at the same instant fire in key order so runs are
        reproducible regardless of store internals.
        """
        fired: list[Any] = []
        expiry = self._expiry
        if not expiry or expiry[0][0] > now:
            return fired
        due: list[Context] = []
        while expiry and expiry[0][0] <= now:
            deadline, _, ctx = heapq.heappop(expiry)
            if not ctx.live or ctx.deadline != deadline:
                continue
            due.append(ctx)
        if len(due) > 1:
            due.sort(key=lambda c: c.key)
        for ctx in due:
            ctx.live = False
            del self._contexts[ctx.key]
            self.report.contexts_expired += 1
            if ctx.trigger(ctx):
                self.report.contexts_fired += 1
                alert = ctx.on_fire(ctx)
                if alert is not None:
                    fired.append(alert)
                    self.emit(alert)
        return fired

    def advance(self, now: float) -> list[Any]:
        self._now = now
        return self.expire_contexts(now)

    def process(self, record: FlowRecord, now: float | None = None) -> None:
        self.advance(self.clock.now_for(record) if now is None else now)
        self.report.messages_processed += 1
        for rule in self.ruleset.rules:
            bindings = rule.matcher(record)
            if bindings is not None:
                for action in rule.actions:
                    action(self, record, bindings)

    def finish(self) -> EngineReport:
        """End of stream: expire everything still pending, triggers included."""
        self.expire_contexts(math.inf)
        return self.report


def run_engine(records: Iterable[FlowRecord], ruleset: Ruleset, *, sinks: Any = None, clock: Any = None) -> EngineReport:
    """Run the batch pipeline over an ordered record stream.

    Engine time comes from record timestamps. Output is a pure function of
    the record sequence and the ruleset.
    """
    engine = CorrelationEngine(ruleset, clock=clock, sinks=sinks)
    for record in records:
        engine.process(record)
    return engine.finish()


def run_follow(
    source: str,
    ruleset: Ruleset,
    *,
    sinks: Any = None,
    tick_interval: float = 1.0,
    poll_interval: float = 0.1,
    stop: Callable[[], bool] | None = None,
    now_fn: Callable[[], float] = time.monotonic,
) -> tuple[EngineReport, IngestStats]:
    """Follow a growing log file, correlating as lines arrive.

    Engine time is the wall clock, and expiry is also checked on an idle
    tick so contexts die on schedule when no traffic shows up. There is no
    end-of-stream flush; the loop just stops when stop() turns true.
    """
    engine = CorrelationEngine(ruleset, clock=WallClock(now_fn), sinks=sinks)
    stats = IngestStats()
    reader = TailReader(source)
    last_tick = now_fn()
    while stop is None or not stop():
        items = reader.poll()
        for item in items:
            if isinstance(item, StreamReset):
                continue
            stats.lines_read += 1
            try:
                record = parse_line(item[1])
            except ParseError:
                stats.parse_failures += 1
                continue
            stats.records_parsed += 1
            engine.process(record, now=now_fn())
        now = now_fn()
        if not items:
            time.sleep(min(poll_interval, tick_interval))
            now = now_fn()
        if now - last_tick >= tick_interval:
            engine.advance(now)
            last_tick = now
    return engine.report, stats
