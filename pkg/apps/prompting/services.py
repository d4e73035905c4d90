"""Prompt rendering for the sensing and power-allocation tasks and parsing of model replies."""
import enum
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from django.template import Context, Engine

from apps.common import serialization
from apps.common.exceptions import (
    ConfigError, InvalidParameterError, MissingMarkerError, AllocationArityError, NonNumericTokenError,
)
from apps.signal.services import Hypothesis, SensingFrame
from apps.waterfill.services import SubcarrierCnrs, PowerBudget

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).resolve().parent / 'templates'
MAX_PRECISION_DIGITS = 17
EXCERPT_CHARS = 256
ALLOCATION_MARKER = 'ALLOCATION:'

_engine = Engine(dirs=[str(TEMPLATE_DIR)], autoescape=False)

SENSING_SYSTEM = "You are an expert in wireless communications and spectrum sensing."
POWER_SYSTEM = "You are an expert in wireless communications and convex optimization."

SENSING_TASK = (
    "Decide whether a primary user is transmitting on the channel. Each input lists received "
    "signal energies |x(n)|^2 in mW. H0 means the channel holds noise only; H1 means a primary "
    "signal is present in addition to the noise. Answer with H0 or H1."
)
SENSING_REASONING = (
    "Reason step by step: compare the typical energy level of the query with the labeled examples "
    "before deciding, then state the final answer, H0 or H1, on the last line.\n\n"
)

POWER_TASK = (
    "Allocate transmit power across the {k} subcarriers of an OFDM system to maximize the sum "
    "capacity, sum_k log2(1 + p_k * c_k), subject to sum_k p_k = {budget} mW and p_k >= 0.\n"
    "Channel states c_k (carrier-to-noise ratio per mW): [{cnrs}]\n"
    "Total power budget (mW): {budget}"
)
POWER_ANSWER = (
    "Give the power of every subcarrier, in mW and in the order listed, on the last line in the "
    "form\nALLOCATION: p1, p2, ..., p{k}"
)
POWER_REASONING = (
    "Solve the task step by step: identify the optimization problem, choose the algorithm that "
    "solves it, carry out each computation explicitly, and check that the budget is met."
)
POWER_PROGRAM = (
    "Break the task into sub-tasks and write a runnable Python program for each one. Run the "
    "complete program and report its result. The final line of your reply must be exactly\n"
    "ALLOCATION: p1, p2, ..., p{k}\nwith the {k} powers produced by the program."
)
POWER_WORKED_EXAMPLE = (
    "Example with channel states [2.0, 1.0] and a 1.0 mW budget:\n"
    "ALLOCATION: 0.75, 0.25\n\n"
)


class PromptStyle(str, enum.Enum):
    ZERO_SHOT = 'zero-shot'
    FEW_SHOT = 'few-shot'
    CHAIN_OF_THOUGHT = 'chain-of-thought'
    CHAIN_OF_THOUGHT_PROGRAM = 'cot-program'

    @property
    def reasons(self) -> bool:
        return self in (PromptStyle.CHAIN_OF_THOUGHT, PromptStyle.CHAIN_OF_THOUGHT_PROGRAM)


@dataclass(frozen=True)
class LabeledExample:
    observation: Tuple[float, ...]
    label: Hypothesis

    def __post_init__(self):
        values = tuple(float(v) for v in self.observation)
        if not values:
            raise InvalidParameterError("Example observation must not be empty")
        if any(not v >= 0.0 for v in values):
            raise InvalidParameterError("Example energies must be nonnegative")
        object.__setattr__(self, 'observation', values)
        object.__setattr__(self, 'label', Hypothesis(self.label))


@dataclass(frozen=True)
class RenderedPrompt:
    system_text: str
    user_text: str
    style: PromptStyle
    fingerprint: str = field(default='')

    @classmethod
    def build(cls, system_text: str, user_text: str, style: PromptStyle) -> 'RenderedPrompt':
        canonical = serialization.dumps({'style': style.value, 'system': system_text, 'user': user_text})
        return cls(system_text, user_text, style, serialization.sha256_hex(canonical))


class DecisionKind(str, enum.Enum):
    DECIDED = 'decided'
    UNPARSEABLE = 'unparseable'


@dataclass(frozen=True)
class ParsedDecision:
    kind: DecisionKind
    hypothesis: Optional[Hypothesis] = None
    raw_excerpt: Optional[str] = None

    @property
    def decided(self) -> bool:
        return self.kind is DecisionKind.DECIDED


def _check_digits(precision_digits: int):
    if not 1 <= int(precision_digits) <= MAX_PRECISION_DIGITS:
        raise InvalidParameterError(
            f"precision_digits must lie in 1..{MAX_PRECISION_DIGITS}, got {precision_digits}"
        )


def format_value(value: float, precision_digits: int) -> str:
    """Scientific notation with `precision_digits` significant digits"""
    return f"{float(value):.{int(precision_digits) - 1}e}"


def format_observation(values: Sequence[float], precision_digits: int) -> str:
    return '[' + ', '.join(format_value(v, precision_digits) for v in values) + ']'


def downsample(frame: SensingFrame, stride: int, precision_digits: int) -> List[float]:
    """Every stride-th energy |x(n)|^2 starting from the first, rounded to significant digits"""
    stride = int(stride)
    if stride < 1:
        raise InvalidParameterError(f"Stride must be at least 1, got {stride}")
    _check_digits(precision_digits)
    return [float(format_value(v, precision_digits)) for v in frame.energies()[::stride]]


def _load_template(name: str, template_path: Optional[Union[str, Path]]):
    if template_path is None:
        return _engine.get_template(f'prompting/{name}.txt')
    try:
        return _engine.from_string(Path(template_path).read_text(encoding='utf-8'))
    except OSError as e:
        raise ConfigError(f"Cannot read prompt template {template_path}: {e}")


def render_template(name: str, template_path=None, **context) -> str:
    """Render a prompt template by name, or the override file at `template_path`"""
    return _load_template(name, template_path).render(Context(context, autoescape=False)).rstrip()


def render_sensing_prompt(examples: Sequence[LabeledExample], query: Sequence[float], style: PromptStyle,
                          precision_digits: int = 4,
                          template_path: Optional[Union[str, Path]] = None) -> RenderedPrompt:
    style = PromptStyle(style)
    _check_digits(precision_digits)
    if style is PromptStyle.ZERO_SHOT and examples:
        raise InvalidParameterError(f"Zero-shot prompts take no examples, got {len(examples)}")
    if style is PromptStyle.FEW_SHOT and not examples:
        raise InvalidParameterError("Few-shot prompts need at least one example")
    if len(query) == 0:
        raise InvalidParameterError("Query observation must not be empty")

    blocks = ''.join(
        f"Example {i}:\nInput: {format_observation(example.observation, precision_digits)}\n"
        f"Output: {example.label.value}\n\n"
        for i, example in enumerate(examples, start=1)
    )
    query_block = f"Query:\nInput: {format_observation(query, precision_digits)}\nOutput:"
    if style.reasons:
        query_block = SENSING_REASONING + query_block

    user_text = render_template('sensing', template_path, task=SENSING_TASK, examples=blocks, query=query_block)
    return RenderedPrompt.build(SENSING_SYSTEM, user_text, style)


def render_power_prompt(cnrs: SubcarrierCnrs, budget: PowerBudget, style: PromptStyle,
                        template_path: Optional[Union[str, Path]] = None) -> RenderedPrompt:
    style = PromptStyle(style)
    k = len(cnrs)
    task = POWER_TASK.format(
        k=k,
        budget=repr(budget.total_mw),
        cnrs=', '.join(repr(c) for c in cnrs.values),
    )
    examples = POWER_WORKED_EXAMPLE if style is PromptStyle.FEW_SHOT else ''
    if style is PromptStyle.CHAIN_OF_THOUGHT_PROGRAM:
        instructions = POWER_REASONING + '\n' + POWER_PROGRAM.format(k=k)
    elif style is PromptStyle.CHAIN_OF_THOUGHT:
        instructions = POWER_REASONING + '\n' + POWER_ANSWER.format(k=k)
    else:
        instructions = POWER_ANSWER.format(k=k)

    user_text = render_template('power', template_path, task=task, examples=examples, query=instructions)
    return RenderedPrompt.build(POWER_SYSTEM, user_text, style)


_DECISION_TOKEN = re.compile(r'\b(h0|h1|absent|present)\b', re.IGNORECASE)
_DECISION_HYPOTHESIS = {
    'h0': Hypothesis.H0,
    'absent': Hypothesis.H0,
    'h1': Hypothesis.H1,
    'present': Hypothesis.H1,
}


def _as_text(response) -> str:
    if isinstance(response, (bytes, bytearray)):
        return bytes(response).decode('utf-8', errors='replace')
    return str(response)


def parse_decision(response) -> ParsedDecision:
    """The last H0/H1/absent/present token of the reply, case-insensitively"""
    text = _as_text(response)
    matches = _DECISION_TOKEN.findall(text)
    if not matches:
        return ParsedDecision(DecisionKind.UNPARSEABLE, raw_excerpt=text[:EXCERPT_CHARS])
    return ParsedDecision(DecisionKind.DECIDED, hypothesis=_DECISION_HYPOTHESIS[matches[-1].lower()])


def parse_allocation(response, k: int) -> List[float]:
    """The k powers on the last line starting with `ALLOCATION:`"""
    if int(k) < 1:
        raise InvalidParameterError(f"k must be at least 1, got {k}")
    text = _as_text(response)
    lines = [line.strip() for line in text.splitlines()]
    marked = [line for line in lines if line.startswith(ALLOCATION_MARKER)]
    if not marked:
        raise MissingMarkerError(f"No line starting with {ALLOCATION_MARKER} in the response",
                                 {'excerpt': text[:EXCERPT_CHARS]})

    tokens = [token.strip() for token in marked[-1][len(ALLOCATION_MARKER):].split(',')]
    if len(tokens) != k:
        raise AllocationArityError(f"Expected {k} powers, got {len(tokens)}",
                                   {'expected': k, 'actual': len(tokens)})
    powers = []
    for position, token in enumerate(tokens):
        try:
            value = float(token)
        except ValueError:
            value = math.nan
        if not math.isfinite(value):
            raise NonNumericTokenError(f"Token {token!r} at position {position} is not a finite number",
                                       {'position': position, 'token': token[:EXCERPT_CHARS]})
        powers.append(value)
    return powers


_QUERY_INPUT = re.compile(r'Query:\s*\nInput: \[([^\]]*)\]')
_POWER_CNRS = re.compile(r'Channel states c_k \(carrier-to-noise ratio per mW\): \[([^\]]*)\]')
_POWER_BUDGET = re.compile(r'Total power budget \(mW\): (\S+)')


def _parse_numbers(text: str) -> List[float]:
    return [float(token) for token in text.split(',') if token.strip()]


def extract_query_observation(user_text: str) -> Optional[List[float]]:
    """Values of the last `Query:` input of a rendered sensing prompt, None if absent"""
    matches = _QUERY_INPUT.findall(user_text)
    if not matches:
        return None
    try:
        return _parse_numbers(matches[-1])
    except ValueError:
        return None


def extract_power_problem(user_text: str) -> Optional[Tuple[SubcarrierCnrs, PowerBudget]]:
    """The instance stated by a rendered power-allocation prompt, None if absent"""
    cnrs, budget = _POWER_CNRS.search(user_text), _POWER_BUDGET.search(user_text)
    if cnrs is None or budget is None:
        return None
    try:
        return SubcarrierCnrs(tuple(_parse_numbers(cnrs.group(1)))), PowerBudget(float(budget.group(1)))
    except (ValueError, InvalidParameterError):
        return None
