"""Protocol-document retrieval: chunked BM25 index, augmented multiple-choice prompts and grading."""
import logging
import math
import re
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from django.conf import settings
from django.core.cache import cache

from apps.common import serialization
from apps.common.exceptions import (
    ConfigError, DuplicateDocumentError, EmptyCorpusError, InvalidParameterError, LengthMismatchError,
    MissingIndexError,
)
from apps.prompting.services import PromptStyle, RenderedPrompt, render_template

logger = logging.getLogger(__name__)

RAG_SYSTEM = "You are an expert in telecommunications standards answering multiple-choice questions."
LETTERS = string.ascii_uppercase

_TOKEN = re.compile(r'[^\W_]+')
# contraction pieces such as the t of don't or the d of I'd are not choices
_STANDALONE_LETTER = re.compile(r"(?<![^\W_])(?<!\w')([A-Za-z])(?![^\W_])(?!'\w)")


@dataclass(frozen=True)
class DocumentRecord:
    doc_id: str
    source: str
    text: str
    metadata: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    source: str
    span: Tuple[int, int]
    text: str
    token_count: int


@dataclass(frozen=True)
class IndexParams:
    chunk_tokens: int
    overlap_tokens: int
    k1: float
    b: float

    def as_dict(self) -> dict:
        return {'chunk_tokens': self.chunk_tokens, 'overlap_tokens': self.overlap_tokens, 'k1': self.k1, 'b': self.b}


@dataclass
class ChunkIndex:
    params: IndexParams
    chunks: List[Chunk]
    term_frequencies: List[Dict[str, int]]
    df: Dict[str, int]
    avg_len: float
    _postings: Dict[str, List[Tuple[int, int]]] = field(default=None, init=False, repr=False, compare=False)

    def postings(self) -> Dict[str, List[Tuple[int, int]]]:
        """term -> [(chunk position, term frequency)]"""
        if self._postings is None:
            postings = defaultdict(list)
            for position, frequencies in enumerate(self.term_frequencies):
                for term, count in frequencies.items():
                    postings[term].append((position, count))
            self._postings = dict(postings)
        return self._postings

    def to_json(self) -> str:
        return serialization.dumps({
            'params': self.params.as_dict(),
            'chunks': [
                {
                    'doc_id': chunk.doc_id,
                    'source': chunk.source,
                    'span': list(chunk.span),
                    'text': chunk.text,
                    'token_count': chunk.token_count,
                    'tf': dict(sorted(frequencies.items())),
                }
                for chunk, frequencies in zip(self.chunks, self.term_frequencies)
            ],
            'df': dict(sorted(self.df.items())),
            'avg_len': self.avg_len,
        }) + '\n'

    def save(self, path) -> str:
        digest = serialization.write_text(path, self.to_json())
        logger.info("Saved index of %d chunks to %s", len(self.chunks), path)
        return digest

    @classmethod
    def from_dict(cls, data: dict) -> 'ChunkIndex':
        try:
            params = IndexParams(**data['params'])
            chunks, frequencies = [], []
            for record in data['chunks']:
                chunks.append(Chunk(
                    doc_id=record['doc_id'],
                    source=record['source'],
                    span=(int(record['span'][0]), int(record['span'][1])),
                    text=record['text'],
                    token_count=int(record['token_count']),
                ))
                frequencies.append({term: int(count) for term, count in record['tf'].items()})
            return cls(params, chunks, frequencies, dict(data['df']), float(data['avg_len']))
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise ConfigError(f"Malformed index file: {e}")

    @classmethod
    def load(cls, path) -> 'ChunkIndex':
        if not Path(path).is_file():
            raise MissingIndexError(f"Index not found: {path}", {'path': str(path)})
        return cls.from_dict(serialization.read_json(path))


@dataclass(frozen=True)
class McQuestion:
    question: str
    options: Tuple[str, ...]
    gold_index: int
    category: str
    explanation: Optional[str] = None

    def __post_init__(self):
        if len(self.options) < 2:
            raise InvalidParameterError("A question needs at least two options")
        if not 0 <= self.gold_index < len(self.options):
            raise InvalidParameterError(f"gold_index {self.gold_index} out of range for {len(self.options)} options")


@dataclass(frozen=True)
class CategoryScore:
    correct: int
    total: int

    @property
    def accuracy_pct(self) -> str:
        return percent(self.correct, self.total)


@dataclass(frozen=True)
class EvalReport:
    categories: Dict[str, CategoryScore]
    unparseable: int

    @property
    def correct(self) -> int:
        return sum(score.correct for score in self.categories.values())

    @property
    def total(self) -> int:
        return sum(score.total for score in self.categories.values())

    @property
    def overall_pct(self) -> str:
        return percent(self.correct, self.total)

    def to_dict(self) -> dict:
        return {
            'categories': {
                name: {'correct': score.correct, 'total': score.total, 'accuracy_pct': score.accuracy_pct}
                for name, score in self.categories.items()
            },
            'overall_pct': self.overall_pct,
            'unparseable': self.unparseable,
        }

    def as_table(self) -> str:
        rows = [(name, str(score.correct), str(score.total), score.accuracy_pct)
                for name, score in self.categories.items()]
        rows.append(('Overall', str(self.correct), str(self.total), self.overall_pct))
        header = ('Category', 'Correct', 'Total', 'Accuracy %')
        widths = [max(len(row[i]) for row in rows + [header]) for i in range(4)]

        def line(cells):
            return '  '.join([cells[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])])

        lines = [line(header), '  '.join('-' * w for w in widths)]
        lines.extend(line(row) for row in rows)
        lines.append(f"Unparseable: {self.unparseable}")
        return '\n'.join(lines) + '\n'


def percent(correct: int, total: int) -> str:
    """correct/total as a percentage with two decimals, rounded half up"""
    if total == 0:
        return '0.00'
    value = Decimal(100 * correct) / Decimal(total)
    return str(value.quantize(Decimal('0.01'), rounding=ROUND_HALF_UP))


def tokenize(text: str) -> List[Tuple[str, int, int]]:
    """Lowercased alphanumeric runs with their character spans"""
    return [(match.group().lower(), match.start(), match.end()) for match in _TOKEN.finditer(text)]


def _windows(count: int, chunk_tokens: int, overlap_tokens: int):
    step = chunk_tokens - overlap_tokens
    start = 0
    while True:
        yield start, min(count, start + chunk_tokens)
        if start + chunk_tokens >= count:
            return
        start += step


def ingest(docs: Sequence[DocumentRecord], chunk_tokens: Optional[int] = None,
           overlap_tokens: Optional[int] = None, k1: Optional[float] = None,
           b: Optional[float] = None) -> ChunkIndex:
    """Window each document into overlapping token chunks and collect BM25 statistics"""
    rag = settings.RADIOBENCH_RAG
    params = IndexParams(
        chunk_tokens=int(chunk_tokens if chunk_tokens is not None else rag['CHUNK_TOKENS']),
        overlap_tokens=int(overlap_tokens if overlap_tokens is not None else rag['OVERLAP_TOKENS']),
        k1=float(k1 if k1 is not None else rag['BM25_K1']),
        b=float(b if b is not None else rag['BM25_B']),
    )
    if params.chunk_tokens < 1:
        raise InvalidParameterError(f"chunk_tokens must be at least 1, got {params.chunk_tokens}")
    if not 0 <= params.overlap_tokens < params.chunk_tokens:
        raise InvalidParameterError(
            f"overlap_tokens must lie in [0, {params.chunk_tokens}), got {params.overlap_tokens}"
        )
    if not docs:
        raise EmptyCorpusError("No documents to ingest")

    seen = set()
    chunks, frequencies = [], []
    for doc in docs:
        if doc.doc_id in seen:
            raise DuplicateDocumentError(f"Duplicate doc_id {doc.doc_id!r}", {'doc_id': doc.doc_id})
        seen.add(doc.doc_id)
        tokens = tokenize(doc.text)
        if not tokens:
            logger.warning("Document %s has no tokens; skipped", doc.doc_id)
            continue
        for start, stop in _windows(len(tokens), params.chunk_tokens, params.overlap_tokens):
            window = tokens[start:stop]
            span = (window[0][1], window[-1][2])
            chunks.append(Chunk(doc.doc_id, doc.source, span, doc.text[span[0]:span[1]], len(window)))
            frequencies.append(dict(Counter(term for term, _, _ in window)))

    if not chunks:
        raise EmptyCorpusError("The corpus contains no tokens")
    df = Counter(term for chunk_terms in frequencies for term in chunk_terms)
    avg_len = sum(chunk.token_count for chunk in chunks) / len(chunks)
    logger.info("Ingested %d documents into %d chunks (%d terms)", len(seen), len(chunks), len(df))
    return ChunkIndex(params, chunks, frequencies, dict(df), avg_len)


def _idf(total: int, df: int) -> float:
    return math.log(1.0 + (total - df + 0.5) / (df + 0.5))


def retrieve(index: ChunkIndex, query: str, k: Optional[int] = None) -> List[Tuple[Chunk, float]]:
    """Top-k chunks by BM25; zero-score chunks are never returned"""
    k = int(k if k is not None else settings.RADIOBENCH_RAG['TOP_K'])
    if k < 1:
        raise InvalidParameterError(f"k must be at least 1, got {k}")
    k1, b = index.params.k1, index.params.b
    total = len(index.chunks)
    postings = index.postings()

    scores = defaultdict(float)
    for term in dict.fromkeys(token for token, _, _ in tokenize(query)):
        if term not in postings:
            continue
        idf = _idf(total, index.df[term])
        for position, tf in postings[term]:
            length_norm = 1.0 - b + b * index.chunks[position].token_count / index.avg_len
            scores[position] += idf * tf * (k1 + 1.0) / (tf + k1 * length_norm)

    ranked = sorted(
        (position for position, score in scores.items() if score > 0.0),
        key=lambda p: (-scores[p], index.chunks[p].doc_id, index.chunks[p].span[0]),
    )
    return [(index.chunks[position], scores[position]) for position in ranked[:k]]


def augment(question: McQuestion, contexts: Sequence[Chunk],
            template_path=None) -> RenderedPrompt:
    """Question prompt preceded by cited context blocks in retrieval order"""
    if len(question.options) > len(LETTERS):
        raise InvalidParameterError(f"At most {len(LETTERS)} options are supported, got {len(question.options)}")
    context = ''
    if contexts:
        blocks = [
            f"Context {i} [source: {chunk.source}; document: {chunk.doc_id}; "
            f"characters {chunk.span[0]}-{chunk.span[1]}]:\n{chunk.text}\n\n"
            for i, chunk in enumerate(contexts, start=1)
        ]
        context = "Use the following context to answer the question.\n\n" + ''.join(blocks)
    options = '\n'.join(f"{LETTERS[i]}. {option}" for i, option in enumerate(question.options))
    last = LETTERS[len(question.options) - 1]
    instruction = f"Answer with exactly one letter from A to {last}."
    user_text = render_template('rag', template_path, context=context, question=question.question,
                                options=options, instruction=instruction)
    return RenderedPrompt.build(RAG_SYSTEM, user_text, PromptStyle.ZERO_SHOT)


def parse_choice(response, n_options: int) -> Optional[int]:
    """Index of the last standalone option letter in the reply, None when there is none"""
    if not 2 <= n_options <= len(LETTERS):
        raise InvalidParameterError(f"n_options must lie in 2..{len(LETTERS)}, got {n_options}")
    if isinstance(response, (bytes, bytearray)):
        response = bytes(response).decode('utf-8', errors='replace')
    choice = None
    for match in _STANDALONE_LETTER.finditer(str(response)):
        position = LETTERS.index(match.group(1).upper())
        if position < n_options:
            choice = position
    return choice


def grade(predictions: Sequence[Optional[int]], questions: Sequence[McQuestion]) -> EvalReport:
    """Per-category accuracy; None predictions count as wrong and as unparseable"""
    if len(predictions) != len(questions):
        raise LengthMismatchError(
            f"{len(predictions)} predictions for {len(questions)} questions",
            {'predictions': len(predictions), 'questions': len(questions)},
        )
    correct, totals = Counter(), Counter()
    unparseable = 0
    for prediction, question in zip(predictions, questions):
        totals[question.category] += 1
        if prediction is None:
            unparseable += 1
        elif prediction == question.gold_index:
            correct[question.category] += 1
    categories = {name: CategoryScore(correct[name], totals[name]) for name in sorted(totals)}
    return EvalReport(categories=categories, unparseable=unparseable)


def cached_index(path) -> ChunkIndex:
    """Load an index once per file content, keeping it in the Django cache"""
    if not path or not Path(path).is_file():
        raise MissingIndexError(f"Index not found: {path or '(RADIOBENCH_RAG.INDEX_PATH unset)'}",
                                {'path': str(path)})
    cache_key = f"ragstore_index_{serialization.sha256_hex(str(Path(path).resolve()))}_{serialization.file_digest(path)}"
    index = cache.get(cache_key)

    if index is None:
        index = ChunkIndex.load(path)
        cache.set(cache_key, index, settings.CACHE_TTL)
    return index
