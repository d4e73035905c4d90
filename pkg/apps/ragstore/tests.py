import json
import re

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings
from hypothesis import given, strategies as st
from rest_framework.test import APISimpleTestCase

from apps.common.exceptions import (
    DatasetSchemaError, DuplicateDocumentError, EmptyCorpusError, InvalidParameterError, LengthMismatchError,
    MissingIndexError,
)
from apps.common.testing import NoNetworkMixin, TempDirMixin
from .serializers import load_documents, load_questions, questions_from_data
from .services import (
    DocumentRecord, ChunkIndex, McQuestion, ingest, retrieve, augment, parse_choice, grade, tokenize,
)

NEEDLE = "orthogonal pilot reuse factor"


def numbered_text(count, prefix='t'):
    return ' '.join(f'{prefix}{i}' for i in range(count))


def needle_corpus(seed=0, needle_position=37):
    """100 documents over a synthetic vocabulary; one short document carries the needle phrase"""
    rng = np.random.default_rng(seed)
    vocabulary = [f'w{i:04d}' for i in range(500)]
    docs = []
    for i in range(100):
        if i == needle_position:
            filler = ' '.join(rng.choice(vocabulary, size=40))
            text = f"{filler} The {NEEDLE} controls interference. {filler}"
        else:
            text = ' '.join(rng.choice(vocabulary, size=int(rng.integers(50, 400))))
        docs.append(DocumentRecord(doc_id=f'doc-{i:03d}', source='synthetic', text=text))
    return docs


def needle_queries():
    words = NEEDLE.split()
    subsets = [
        ' '.join(word for bit, word in enumerate(words) if mask >> bit & 1)
        for mask in range(1, 16)
    ]
    return subsets + [
        NEEDLE.upper(),
        ' '.join(reversed(words)),
        'orthogonal-pilot reuse, factor?',
        'What is the orthogonal pilot reuse factor',
        'pilot pilot reuse reuse',
    ]


def question(category, gold=0):
    return McQuestion(question='Which?', options=('one', 'two', 'three', 'four'), gold_index=gold, category=category)


class TokenizeTests(NoNetworkMixin, SimpleTestCase):

    def test_lowercase_alphanumeric(self):
        tokens = tokenize("3GPP Rel-17: NR_U, 5G!")
        self.assertEqual([t for t, _, _ in tokens], ['3gpp', 'rel', '17', 'nr', 'u', '5g'])
        self.assertEqual(tokens[0][1:], (0, 4))


class IngestTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def test_short_document_is_one_chunk(self):
        index = ingest([DocumentRecord('a', 'src', numbered_text(100))], 256, 64)
        self.assertEqual(len(index.chunks), 1)
        self.assertEqual(index.chunks[0].token_count, 100)

    def test_window_arithmetic(self):
        text = numbered_text(300)
        index = ingest([DocumentRecord('a', 'src', text)], 256, 64)
        self.assertEqual(len(index.chunks), 2)
        second = index.chunks[1]
        self.assertTrue(second.text.startswith('t192 '))
        self.assertEqual(second.token_count, 108)
        self.assertEqual(text[second.span[0]:second.span[1]], second.text)

    def test_statistics(self):
        index = ingest([DocumentRecord('a', 's', 'x y y'), DocumentRecord('b', 's', 'y z')], 256, 64)
        self.assertEqual(index.df, {'x': 1, 'y': 2, 'z': 1})
        self.assertEqual(index.avg_len, 2.5)
        self.assertEqual(index.term_frequencies[0], {'x': 1, 'y': 2})

    def test_deterministic_persistence(self):
        first, second = self.tmp / 'a.json', self.tmp / 'b.json'
        ingest(needle_corpus(), 256, 64).save(first)
        ingest(needle_corpus(), 256, 64).save(second)
        self.assertEqual(first.read_bytes(), second.read_bytes())
        keys = list(json.loads(first.read_text(encoding='utf-8')))
        self.assertEqual(keys, ['params', 'chunks', 'df', 'avg_len'])

    def test_errors(self):
        with self.assertRaises(DuplicateDocumentError):
            ingest([DocumentRecord('a', 's', 'x'), DocumentRecord('a', 's', 'y')], 256, 64)
        with self.assertRaises(EmptyCorpusError):
            ingest([], 256, 64)
        with self.assertRaises(EmptyCorpusError):
            ingest([DocumentRecord('a', 's', '!!!')], 256, 64)
        with self.assertRaises(InvalidParameterError):
            ingest([DocumentRecord('a', 's', 'x')], 8, 8)


class RetrieveTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.index = ingest(needle_corpus(), 256, 64)

    def test_needle_ranks_first(self):
        queries = needle_queries()
        self.assertEqual(len(queries), 20)
        for query in queries:
            results = retrieve(self.index, query, 5)
            self.assertEqual(results[0][0].doc_id, 'doc-037', query)
            self.assertIn('pilot', results[0][0].text)

    def test_needle_in_other_positions(self):
        for seed, position in ((1, 0), (2, 99), (3, 50)):
            index = ingest(needle_corpus(seed, position), 256, 64)
            self.assertEqual(retrieve(index, NEEDLE, 1)[0][0].doc_id, f'doc-{position:03d}')

    def test_empty_query(self):
        self.assertEqual(retrieve(self.index, '', 5), [])
        self.assertEqual(retrieve(self.index, '?!', 5), [])

    def test_descending_scores(self):
        results = retrieve(self.index, 'w0001 w0002 w0003', 10)
        scores = [score for _, score in results]
        self.assertEqual(scores, sorted(scores, reverse=True))
        self.assertTrue(all(score > 0 for score in scores))

    def test_k_larger_than_matches(self):
        index = ingest([DocumentRecord(str(i), 's', f'alpha {i}') for i in range(3)]
                       + [DocumentRecord('z', 's', 'beta')], 256, 64)
        results = retrieve(index, 'alpha', 50)
        self.assertEqual([chunk.doc_id for chunk, _ in results], ['0', '1', '2'])

    def test_deterministic(self):
        self.assertEqual(retrieve(self.index, 'w0100 w0200', 5), retrieve(self.index, 'w0100 w0200', 5))

    def test_round_trip(self):
        path = self.tmp / 'index.json'
        self.index.save(path)
        loaded = ChunkIndex.load(path)
        for query in ('w0100 w0200 w0300', NEEDLE, 'w0042'):
            self.assertEqual(retrieve(loaded, query, 10), retrieve(self.index, query, 10))

    def test_unrelated_document_keeps_order(self):
        docs = [DocumentRecord('a', 's', 'radio radio signal'), DocumentRecord('b', 's', 'radio noise noise')]
        before = [chunk.doc_id for chunk, _ in retrieve(ingest(docs, 256, 64), 'radio', 5)]
        after_index = ingest(docs + [DocumentRecord('c', 's', 'unrelated words here')], 256, 64)
        after = [chunk.doc_id for chunk, _ in retrieve(after_index, 'radio', 5)]
        self.assertEqual(before, ['a', 'b'])
        self.assertEqual(after, before)

    def test_missing_index(self):
        with self.assertRaises(MissingIndexError):
            ChunkIndex.load(self.tmp / 'missing.json')


class AugmentTests(NoNetworkMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.index = ingest(needle_corpus(), 256, 64)

    def test_without_context(self):
        prompt = augment(question('x'), [])
        self.assertNotIn('Context', prompt.user_text)
        self.assertTrue(prompt.user_text.startswith('Question: Which?'))

    def test_cited_contexts_in_order(self):
        contexts = [chunk for chunk, _ in retrieve(self.index, 'w0001 w0002', 3)]
        prompt = augment(question('x'), contexts)
        for i, chunk in enumerate(contexts, start=1):
            citation = f"Context {i} [source: synthetic; document: {chunk.doc_id}; characters {chunk.span[0]}-{chunk.span[1]}]"
            self.assertIn(citation, prompt.user_text)
        positions = [prompt.user_text.index(f'Context {i} [') for i in (1, 2, 3)]
        self.assertEqual(positions, sorted(positions))

    def test_lettered_options(self):
        prompt = augment(question('x'), [])
        self.assertEqual(re.findall(r'^([A-Z])\. ', prompt.user_text, re.M), ['A', 'B', 'C', 'D'])
        self.assertIn('exactly one letter', prompt.user_text)

    def test_too_many_options(self):
        many = McQuestion(question='?', options=tuple(str(i) for i in range(27)), gold_index=0, category='x')
        with self.assertRaises(InvalidParameterError):
            augment(many, [])

    def test_deterministic(self):
        self.assertEqual(augment(question('x'), []).fingerprint, augment(question('x'), []).fingerprint)


class ParseChoiceTests(NoNetworkMixin, SimpleTestCase):

    def test_parenthesized(self):
        self.assertEqual(parse_choice("The answer is (B).", 4), 1)

    def test_last_match_wins(self):
        self.assertEqual(parse_choice("A... but actually C", 4), 2)

    def test_unparseable(self):
        self.assertIsNone(parse_choice("none of these", 4))

    def test_contractions_are_not_choices(self):
        self.assertIsNone(parse_choice("We don't know; it's unclear", 20))
        self.assertEqual(parse_choice("I'd say 'C', I don't think it's D", 4), 3)
        self.assertEqual(parse_choice("I'd say 'C'", 4), 2)

    def test_out_of_range_letter_ignored(self):
        self.assertEqual(parse_choice("B, not E", 4), 1)
        self.assertEqual(parse_choice("answer: c", 4), 2)

    @given(st.binary(max_size=256), st.integers(min_value=2, max_value=26))
    def test_total(self, data, n_options):
        choice = parse_choice(data, n_options)
        self.assertTrue(choice is None or 0 <= choice < n_options)


class GradeTests(NoNetworkMixin, SimpleTestCase):

    def test_all_correct(self):
        questions = [question('x', gold=i % 4) for i in range(6)]
        self.assertEqual(grade([q.gold_index for q in questions], questions).overall_pct, '100.00')

    def test_hand_counted_fixture(self):
        questions = [question('alpha', gold=1) for _ in range(5)] + [question('beta', gold=2) for _ in range(5)]
        predictions = [1, 1, 1, 1, 0] + [2, 2, 2, None, 3]
        report = grade(predictions, questions)
        self.assertEqual(report.to_dict(), {
            'categories': {
                'alpha': {'correct': 4, 'total': 5, 'accuracy_pct': '80.00'},
                'beta': {'correct': 3, 'total': 5, 'accuracy_pct': '60.00'},
            },
            'overall_pct': '70.00',
            'unparseable': 1,
        })
        self.assertEqual(report.total, 10)
        self.assertEqual(report.correct, 7)
        table = report.as_table()
        self.assertIn('alpha', table)
        self.assertRegex(table, r'Overall\s+7\s+10\s+70\.00')

    def test_all_unparseable(self):
        questions = [question('x') for _ in range(3)]
        report = grade([None] * 3, questions)
        self.assertEqual(report.overall_pct, '0.00')
        self.assertEqual(report.unparseable, 3)

    def test_rounding(self):
        questions = [question('x') for _ in range(3)]
        self.assertEqual(grade([0, 0, 1], questions).overall_pct, '66.67')

    def test_length_mismatch(self):
        with self.assertRaises(LengthMismatchError):
            grade([0], [])


class DatasetLoaderTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def test_array_records(self):
        questions = questions_from_data([
            {'question': 'Q1', 'options': ['a', 'b'], 'answer': 1, 'category': 'c'},
            {'question': 'Q2', 'options': ['a', 'b', 'c'], 'answer': 'c', 'category': 'c', 'explanation': 'e'},
        ])
        self.assertEqual([q.gold_index for q in questions], [1, 2])
        self.assertEqual(questions[1].explanation, 'e')

    def test_teleqna_shape(self):
        path = self.tmp / 'teleqna.json'
        path.write_text(json.dumps({
            'question 0': {
                'question': 'Which layer?',
                'option 1': 'PHY',
                'option 2': 'MAC',
                'option 3': 'RRC',
                'answer': 'option 2: MAC',
                'explanation': '...',
                'category': 'Standards specifications',
            },
        }), encoding='utf-8')
        [parsed] = load_questions(path)
        self.assertEqual(parsed.options, ('PHY', 'MAC', 'RRC'))
        self.assertEqual(parsed.gold_index, 1)
        self.assertEqual(parsed.category, 'Standards specifications')

    def test_schema_errors_name_records(self):
        with self.assertRaises(DatasetSchemaError) as ctx:
            questions_from_data([
                {'question': 'ok', 'options': ['a', 'b'], 'answer': 0},
                {'question': 'bad', 'options': ['a', 'b'], 'answer': 'z'},
                {'question': 'bad', 'options': ['a'], 'answer': 0},
            ])
        self.assertEqual(sorted(ctx.exception.details), ['1', '2'])

    def test_documents_from_directory(self):
        (self.tmp / 'rel17').mkdir()
        (self.tmp / 'rel17' / 'nr.md').write_text('New radio', encoding='utf-8')
        (self.tmp / 'intro.txt').write_text('Intro text', encoding='utf-8')
        (self.tmp / 'ignored.pdf').write_text('x', encoding='utf-8')
        docs = load_documents(self.tmp)
        self.assertEqual([d.doc_id for d in docs], ['intro.txt', 'rel17/nr.md'])
        self.assertEqual(docs[1].source, 'rel17')

    def test_documents_from_json(self):
        path = self.tmp / 'docs.json'
        path.write_text(json.dumps([{'doc_id': 'a', 'source': 's', 'text': 'hello', 'metadata': {'k': 'v'}}]),
                        encoding='utf-8')
        [doc] = load_documents(path)
        self.assertEqual(doc.metadata, {'k': 'v'})


class RetrieveApiTests(NoNetworkMixin, TempDirMixin, APISimpleTestCase):

    def test_retrieve(self):
        path = self.tmp / 'index.json'
        ingest(needle_corpus(), 256, 64).save(path)
        with override_settings(RADIOBENCH_RAG={**settings.RADIOBENCH_RAG, 'INDEX_PATH': str(path)}):
            response = self.client.get('/rag/retrieve', {'q': NEEDLE, 'k': 2})
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['data']['results'][0]['doc_id'], 'doc-037')

    def test_missing_index(self):
        with override_settings(RADIOBENCH_RAG={**settings.RADIOBENCH_RAG, 'INDEX_PATH': str(self.tmp / 'x.json')}):
            response = self.client.get('/rag/retrieve', {'q': 'x'})
        self.assertEqual(response.status_code, 404)
        self.assertEqual(response.json()['error']['code'], 'MISSING_INDEX')
