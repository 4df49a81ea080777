"""Benchmark harness for external chat-completion models.

Prompts render byte-exactly from versioned template files plus an optional
exemplar block, ending with the ####-delimited headline. Replies are parsed
back to categories by earliest-position name search; unparseable replies are
first-class ParseFailure values, scored as incorrect. A deterministic
scripted mock stands in for hosted endpoints.
"""

from __future__ import annotations

import importlib.resources
import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from . import metrics
from .newsstore import Article, CyberCategory

ZERO = "zero"
ONE = "one"
FEW = "few"

PROMPT_NAMES = {
    CyberCategory.RecentCyberAttack: "Recent Cyber Attack",
    CyberCategory.Litigation: "Cyber Litigation",
    CyberCategory.Prevention: "Cyber Attack Prevention",
    CyberCategory.FutureThreat: "Future Cyber Threat",
    CyberCategory.Other: "Other",
}

# Searched case-insensitively on word boundaries; earliest match wins,
# longest phrase breaking position ties.
_NAME_PATTERNS: list[tuple[str, CyberCategory]] = [
    ("recent cyber attack", CyberCategory.RecentCyberAttack),
    ("recentcyberattack", CyberCategory.RecentCyberAttack),
    ("cyber attack prevention", CyberCategory.Prevention),
    ("prevention", CyberCategory.Prevention),
    ("cyber litigation", CyberCategory.Litigation),
    ("litigation", CyberCategory.Litigation),
    ("future cyber threat", CyberCategory.FutureThreat),
    ("future threat", CyberCategory.FutureThreat),
    ("futurethreat", CyberCategory.FutureThreat),
    ("other", CyberCategory.Other),
]


class PromptSpecError(ValueError):
    pass


class EndpointUnreachableError(Exception):
    """Transport kept failing after the configured retries."""


class BenchmarkAborted(Exception):
    """Benchmark stopped early; partial results ride on .partial."""

    def __init__(self, partial: "BenchmarkRun", cause: Exception):
        super().__init__(f"benchmark aborted after {len(partial.responses)} articles: {cause}")
        self.partial = partial


@dataclass
class PromptSpec:
    template: str  # "t1" | "t2"
    shots: str  # "zero" | "one" | "few"
    exemplars: list[tuple[str, CyberCategory]] = field(default_factory=list)

    def __post_init__(self):
        if self.template not in ("t1", "t2"):
            raise PromptSpecError(f"unknown template {self.template!r}")
        if self.shots not in (ZERO, ONE, FEW):
            raise PromptSpecError(f"unknown shots {self.shots!r}")
        per_class = {c: 0 for c in CyberCategory}
        for _, category in self.exemplars:
            per_class[category] += 1
        if self.shots == ZERO:
            if self.exemplars:
                raise PromptSpecError("zero-shot prompts carry no exemplars")
        elif self.shots == ONE:
            if any(n != 1 for n in per_class.values()):
                raise PromptSpecError("one-shot needs exactly one exemplar per category")
        else:
            if any(n < 2 for n in per_class.values()):
                raise PromptSpecError("few-shot needs at least two exemplars per category")


def _template_text(name: str) -> str:
    ref = importlib.resources.files("cybernews.data") / f"template_{name}.txt"
    return ref.read_text(encoding="utf-8")


def default_exemplars(shots: str) -> list[tuple[str, CyberCategory]]:
    """Bundled exemplar set: first-per-category for one-shot, all for few-shot."""
    ref = importlib.resources.files("cybernews.data") / "exemplars.json"
    raw = json.loads(ref.read_text(encoding="utf-8"))["exemplars"]
    pool = [(e["headline"], CyberCategory[e["category"]]) for e in raw]
    if shots == ZERO:
        return []
    if shots == FEW:
        return pool
    seen: set[CyberCategory] = set()
    firsts = []
    for headline, category in pool:
        if category not in seen:
            seen.add(category)
            firsts.append((headline, category))
    return firsts


def build_prompt(spec: PromptSpec, headline: str) -> str:
    """Render the prompt for one headline; a pure function of (spec, headline)."""
    parts = [_template_text(spec.template).rstrip("\n"), ""]
    if spec.shots != ZERO:
        if not spec.exemplars:
            raise PromptSpecError(f"{spec.shots}-shot prompt without exemplars")
        lines = [
            json.dumps({"sentence": s, "category": PROMPT_NAMES[c]}, ensure_ascii=False)
            for s, c in spec.exemplars
        ]
        parts.append("Examples for each category are:")
        parts.append(",\n".join(lines))
        parts.append("")
    parts.append(f"####{headline}####")
    return "\n".join(parts)


@dataclass
class ParseFailure:
    raw: str


def parse_category(raw: str) -> CyberCategory | ParseFailure:
    """Extract a category from a model reply; no recognizable name is a failure."""
    text = raw.lower()
    best: tuple[int, int, CyberCategory] | None = None  # (position, -length, category)
    for phrase, category in _NAME_PATTERNS:
        match = re.search(rf"\b{re.escape(phrase)}\b", text)
        if match is None:
            continue
        key = (match.start(), -len(phrase), category)
        if best is None or key < best:
            best = key
    if best is None:
        return ParseFailure(raw)
    return best[2]


@dataclass
class LlmEndpointConfig:
    base_url: str
    model: str
    auth_token_env: str | None = None
    timeout_s: float = 30.0
    max_retries: int = 2
    input_price_per_1k: float = 0.0
    output_price_per_1k: float = 0.0

    def __post_init__(self):
        if self.timeout_s <= 0:
            raise ValueError("timeout must be positive")
        if self.input_price_per_1k < 0 or self.output_price_per_1k < 0:
            raise ValueError("prices must be non-negative")


@dataclass
class CompletionResult:
    text: str
    input_tokens: int
    output_tokens: int


class ChatClient(Protocol):
    def complete(self, prompt: str, sequence_index: int = 0) -> CompletionResult: ...


def _approx_tokens(text: str) -> int:
    return len(text.split())


class HttpChatClient:
    """Generic chat-completion POST client (messages list, temperature 0)."""

    def __init__(self, config: LlmEndpointConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        headers = {}
        if config.auth_token_env:
            token = os.environ.get(config.auth_token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            timeout=config.timeout_s, headers=headers, transport=transport
        )

    def complete(self, prompt: str, sequence_index: int = 0) -> CompletionResult:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._client.post(self.config.base_url, json=payload)
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = RuntimeError(f"HTTP {response.status_code}")
                    time.sleep(min(0.2 * (attempt + 1), 2.0))
                    continue
                response.raise_for_status()
                body = response.json()
                text = body["choices"][0]["message"]["content"]
                usage = body.get("usage", {})
                return CompletionResult(
                    text,
                    usage.get("prompt_tokens", _approx_tokens(prompt)),
                    usage.get("completion_tokens", _approx_tokens(text)),
                )
            except httpx.TransportError as exc:
                last_error = exc
                time.sleep(min(0.2 * (attempt + 1), 2.0))
        raise EndpointUnreachableError(str(last_error))


class ScriptedMockClient:
    """Deterministic offline stand-in; reply i serves article i (cycled)."""

    def __init__(self, replies: Sequence[str] | Callable[[int], str]):
        if callable(replies):
            self._reply_for = replies
        else:
            replies = list(replies)
            if not replies:
                raise ValueError("mock needs at least one scripted reply")
            self._reply_for = lambda i: replies[i % len(replies)]

    def complete(self, prompt: str, sequence_index: int = 0) -> CompletionResult:
        text = self._reply_for(sequence_index)
        return CompletionResult(text, _approx_tokens(prompt), _approx_tokens(text))


def load_mock_script(path: str | Path) -> ScriptedMockClient:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return ScriptedMockClient(raw["replies"])


def estimate_cost(input_tokens: int, output_tokens: int, config: LlmEndpointConfig) -> float:
    return (
        input_tokens / 1000.0 * config.input_price_per_1k
        + output_tokens / 1000.0 * config.output_price_per_1k
    )


@dataclass
class BenchmarkRun:
    template: str
    shots: str
    responses: list[str]
    parsed: list[int | None]  # category code, None on parse failure
    parse_failures: int
    input_tokens: int
    output_tokens: int
    wall_clock_s: float
    cost: float
    report: metrics.EvalReport | None  # over successfully parsed replies
    penalized_accuracy: float  # failures counted as wrong

    @property
    def parse_failure_rate(self) -> float:
        return self.parse_failures / len(self.parsed) if self.parsed else 0.0

    def to_json(self, path: str | Path) -> None:
        payload = {
            "template": self.template,
            "shots": self.shots,
            "responses": self.responses,
            "parsed": self.parsed,
            "parse_failures": self.parse_failures,
            "parse_failure_rate": self.parse_failure_rate,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "wall_clock_s": self.wall_clock_s,
            "cost": self.cost,
            "penalized_accuracy": self.penalized_accuracy,
            "report": metrics.report_to_json(self.report) if self.report else None,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _finish_run(
    spec: PromptSpec,
    articles: Sequence[Article],
    gold: dict[str, CyberCategory],
    responses: list[str],
    token_totals: tuple[int, int],
    started: float,
    config: LlmEndpointConfig | None,
) -> BenchmarkRun:
    parsed: list[int | None] = []
    correct = 0
    subset_true: list[int] = []
    subset_pred: list[int] = []
    for article, text in zip(articles, responses):
        result = parse_category(text)
        truth = gold[article.id]
        if isinstance(result, ParseFailure):
            parsed.append(None)
        else:
            parsed.append(result.value)
            subset_true.append(truth.value)
            subset_pred.append(result.value)
            if result == truth:
                correct += 1
    report = metrics.evaluate(subset_true, subset_pred) if subset_true else None
    cost = estimate_cost(*token_totals, config) if config else 0.0
    return BenchmarkRun(
        template=spec.template,
        shots=spec.shots,
        responses=responses,
        parsed=parsed,
        parse_failures=sum(1 for p in parsed if p is None),
        input_tokens=token_totals[0],
        output_tokens=token_totals[1],
        wall_clock_s=time.perf_counter() - started,
        cost=cost,
        report=report,
        penalized_accuracy=correct / len(responses) if responses else 0.0,
    )


def run_benchmark(
    client: ChatClient,
    spec: PromptSpec,
    articles: Sequence[Article],
    gold: dict[str, CyberCategory],
    config: LlmEndpointConfig | None = None,
    parallel: int = 1,
) -> BenchmarkRun:
    """Classify every article through the client and score the replies.

    Results always follow input order. parallel > 1 bounds in-flight requests
    with a thread pool. On an unreachable endpoint the partial run is
    preserved on the raised BenchmarkAborted.
    """
    missing = [a.id for a in articles if a.id not in gold]
    if missing:
        raise ValueError(f"gold labels missing for {len(missing)} articles, e.g. {missing[0]!r}")
    started = time.perf_counter()
    responses: list[str] = []
    in_total = out_total = 0
    try:
        if parallel <= 1:
            for i, article in enumerate(articles):
                result = client.complete(build_prompt(spec, article.headline), sequence_index=i)
                responses.append(result.text)
                in_total += result.input_tokens
                out_total += result.output_tokens
        else:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                futures = [
                    pool.submit(
                        client.complete, build_prompt(spec, a.headline), sequence_index=i
                    )
                    for i, a in enumerate(articles)
                ]
                for future in futures:
                    result = future.result()
                    responses.append(result.text)
                    in_total += result.input_tokens
                    out_total += result.output_tokens
    except EndpointUnreachableError as exc:
        partial = _finish_run(
            spec, articles[: len(responses)], gold, responses,
            (in_total, out_total), started, config,
        )
        raise BenchmarkAborted(partial, exc) from exc
    return _finish_run(spec, articles, gold, responses, (in_total, out_total), started, config)


@dataclass
class CostRow:
    model: str
    inference_time_hr: float
    infrastructure: str
    inference_cost: float


def format_cost_table(rows: Iterable[CostRow]) -> str:
    """Fixed-width comparison of model inference time and cost."""
    lines = [
        f"{'Model':<12}{'Inference Time (hr)':>20}  {'Infrastructure':<16}{'Inference Cost ($)':>19}"
    ]
    for row in rows:
        lines.append(
            f"{row.model:<12}{row.inference_time_hr:>20.3f}  "
            f"{row.infrastructure:<16}{row.inference_cost:>19.4f}"
        )
    return "\n".join(lines) + "\n"
