import logging
import re
from pathlib import Path
from typing import List

from rest_framework import serializers

from apps.common import serialization
from apps.common.exceptions import ConfigError, DatasetSchemaError
from .services import DocumentRecord, McQuestion

logger = logging.getLogger(__name__)

DOCUMENT_SUFFIXES = ('.txt', '.md')

_OPTION_KEY = re.compile(r'^option (\d+)$')
_OPTION_ANSWER = re.compile(r'^option (\d+)\s*:')


class DocumentRecordSerializer(serializers.Serializer):
    doc_id = serializers.CharField()
    source = serializers.CharField(allow_blank=True, default='')
    text = serializers.CharField(trim_whitespace=False)
    metadata = serializers.DictField(child=serializers.CharField(allow_blank=True), default=dict)


class QuestionRecordSerializer(serializers.Serializer):
    """A multiple-choice record; `answer` is a 0-based index or the exact text of an option"""
    question = serializers.CharField()
    options = serializers.ListField(child=serializers.CharField(allow_blank=True), min_length=2, max_length=26)
    answer = serializers.JSONField()
    category = serializers.CharField(default='uncategorized')
    explanation = serializers.CharField(required=False, allow_blank=True, allow_null=True)

    def validate(self, attrs):
        answer, options = attrs['answer'], attrs['options']
        if isinstance(answer, bool):
            raise serializers.ValidationError({'answer': 'Must be an option index or option text'})
        if isinstance(answer, int):
            if not 0 <= answer < len(options):
                raise serializers.ValidationError({'answer': f'Index {answer} out of range'})
            attrs['gold_index'] = answer
        elif isinstance(answer, str):
            if answer not in options:
                raise serializers.ValidationError({'answer': 'Does not match any option exactly'})
            attrs['gold_index'] = options.index(answer)
        else:
            raise serializers.ValidationError({'answer': 'Must be an option index or option text'})
        return attrs


class RetrieveQuerySerializer(serializers.Serializer):
    q = serializers.CharField(allow_blank=True)
    k = serializers.IntegerField(min_value=1, required=False)


def _validated_records(records, serializer_class, label):
    if not isinstance(records, list):
        raise DatasetSchemaError(f"{label} file must hold a JSON array")
    validated, errors = [], {}
    for number, record in enumerate(records):
        serializer = serializer_class(data=record)
        if serializer.is_valid():
            validated.append(serializer.validated_data)
        else:
            errors[str(number)] = serializer.errors
    if errors:
        raise DatasetSchemaError(f"{len(errors)} invalid {label} record(s)", errors)
    return validated


def documents_from_records(records) -> List[DocumentRecord]:
    return [
        DocumentRecord(doc_id=attrs['doc_id'], source=attrs['source'], text=attrs['text'],
                       metadata=dict(attrs['metadata']))
        for attrs in _validated_records(records, DocumentRecordSerializer, 'document')
    ]


def load_documents(path) -> List[DocumentRecord]:
    """Documents from a JSON array of records, or from the .txt/.md files under a directory"""
    path = Path(path)
    if not path.is_dir():
        return documents_from_records(serialization.read_json(path))

    docs = []
    for file in sorted(p for p in path.rglob('*') if p.is_file() and p.suffix in DOCUMENT_SUFFIXES):
        text = file.read_text(encoding='utf-8')
        if not text.strip():
            logger.warning("Skipping empty document %s", file)
            continue
        relative = file.relative_to(path)
        source = relative.parent.as_posix() if relative.parent != Path('.') else path.name
        docs.append(DocumentRecord(doc_id=relative.as_posix(), source=source, text=text))
    if not docs:
        raise ConfigError(f"No .txt or .md documents under {path}")
    return docs


def _teleqna_records(data: dict) -> list:
    """Convert the published {"question N": {..., "option k": ...}} shape into array records"""
    records = []
    for key, entry in data.items():
        if not isinstance(entry, dict):
            records.append(entry)
            continue
        numbered = sorted(
            (int(match.group(1)), value)
            for name, value in entry.items()
            if (match := _OPTION_KEY.match(name))
        )
        options = [value for _, value in numbered]
        record = {
            'question': entry.get('question'),
            'options': options,
            'category': entry.get('category', 'uncategorized'),
            'explanation': entry.get('explanation'),
        }
        answer = entry.get('answer')
        match = _OPTION_ANSWER.match(answer) if isinstance(answer, str) else None
        if match:
            positions = [number for number, _ in numbered]
            number = int(match.group(1))
            record['answer'] = positions.index(number) if number in positions else -1
        else:
            record['answer'] = answer
        records.append(record)
    return records


def questions_from_data(data) -> List[McQuestion]:
    if isinstance(data, dict):
        data = _teleqna_records(data)
    return [
        McQuestion(
            question=attrs['question'],
            options=tuple(attrs['options']),
            gold_index=attrs['gold_index'],
            category=attrs['category'],
            explanation=attrs.get('explanation'),
        )
        for attrs in _validated_records(data, QuestionRecordSerializer, 'question')
    ]


def load_questions(path) -> List[McQuestion]:
    return questions_from_data(serialization.read_json(path))
