"""Experiment drivers wiring signal, detector, prompting, llm, waterfill and ragstore together.

Every runner writes its artifacts into an output directory and returns the RunManifest
describing the run; `rerun` replays a manifest and compares output digests.
"""
import csv
import io
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from apps.common import serialization
from apps.common.exceptions import AllocationParseError, BackendError, ConfigError, ValidationFailure
from apps.detector.services import (
    Decision, RatePair, RateRow, TargetFalseAlarm, binomial_half_width, detect, monte_carlo_rates,
    np_threshold, rate_csv, rates_from_statistics, simulate_statistics,
)
from apps.llm.services import ChatCompletionService
from apps.llm.transcripts import BackendConfig, BackendKind, TranscriptWriter
from apps.prompting.services import (
    LabeledExample, PromptStyle, RenderedPrompt, downsample, parse_allocation, parse_decision,
    render_power_prompt, render_sensing_prompt,
)
from apps.ragstore.serializers import load_documents, load_questions
from apps.ragstore.services import ChunkIndex, McQuestion, augment, grade, ingest, parse_choice, retrieve
from apps.signal.services import (
    Hypothesis, NoisePower, SnrSpec, derive_seed, derive_seeds, empirical_energy, generate_frame,
)
from apps.waterfill.services import (
    PowerBudget, SubcarrierCnrs, VerdictKind, random_instance, validate_external_solution, waterfill,
)
from .experiments import (
    MANIFEST_NAME, PowerBenchConfig, RagEvalConfig, RagIngestConfig, RagQueryConfig, RocConfig, RunManifest,
    SenseBenchConfig, WaterfillConfig,
)
from .serializers import experiment_config

logger = logging.getLogger(__name__)

# Child-stream labels under the benchmark seed; each is further split by SNR position
ENERGY_STREAM = 0
EXAMPLE_STREAM = 1
QUERY_STREAM = 2

SENSE_RESULTS = 'results.csv'
SENSE_QUERY_ENERGY = 'query_energy.csv'
ROC_RESULTS = 'roc.csv'
POWER_RESULTS = 'power_bench.csv'
POWER_VERDICTS = 'verdicts.json'
RAG_REPORT = 'report.json'
RAG_TABLE = 'report.txt'
RAG_HITS = 'hits.txt'
EXCERPT_CHARS = 160

POWER_CSV_HEADER = ['style', 'instances', 'optimal', 'suboptimal', 'infeasible', 'unparseable', 'errors',
                    'optimal_pct']


def _labeled_frames(truth: Hypothesis, noise: NoisePower, snr: Optional[SnrSpec], n: int, seeds):
    return [generate_frame(truth, noise, snr if truth is Hypothesis.H1 else None, n, int(seed)) for seed in seeds]


def _snr_seeds(seed: int, position: int) -> dict:
    return {
        'energy': derive_seed(seed, ENERGY_STREAM, position),
        'examples': derive_seed(seed, EXAMPLE_STREAM, position),
        'queries': derive_seed(seed, QUERY_STREAM, position),
    }


def few_shot_examples(config: SenseBenchConfig, noise: NoisePower, snr: SnrSpec, seed: int) -> List[LabeledExample]:
    """Half H0, half H1 labeled observations in a seeded shuffled order; H1 frames at the test SNR"""
    half = config.few_shot_examples // 2
    examples = []
    for truth in (Hypothesis.H0, Hypothesis.H1):
        seeds = derive_seeds(seed, 1 if truth is Hypothesis.H1 else 0, half)
        for frame in _labeled_frames(truth, noise, snr, config.n_samples, seeds):
            examples.append(LabeledExample(tuple(downsample(frame, config.stride, config.precision_digits)), truth))
    order = np.random.default_rng(seed).permutation(len(examples))
    return [examples[i] for i in order]


def _rates_from_decisions(decisions: Sequence[Decision], truths: Sequence[Hypothesis]) -> RatePair:
    present = {truth: 0 for truth in Hypothesis}
    totals = {truth: 0 for truth in Hypothesis}
    for decision, truth in zip(decisions, truths):
        totals[truth] += 1
        present[truth] += decision is Decision.PRESENT
    trials = totals[Hypothesis.H1]
    return RatePair(
        pd=present[Hypothesis.H1] / trials,
        pf=present[Hypothesis.H0] / totals[Hypothesis.H0],
        trials=trials,
        half_width=binomial_half_width(trials),
    )


def _sensing_backend(config: SenseBenchConfig, eta_mw: float) -> BackendConfig:
    backend = config.backend
    if backend.kind is BackendKind.ORACLE_SENSING and 'eta_mw' not in backend.oracle_params:
        backend = backend.replace(oracle_params={**backend.oracle_params, 'eta_mw': eta_mw})
    return backend


def sense_bench(config: SenseBenchConfig, out_dir, recorder: Optional[TranscriptWriter] = None) -> RunManifest:
    """Energy detector versus the prompted detector at each SNR.

    All energy rows are simulated before the first backend call. For each SNR the
    prompted detector sees test_prompts_per_snr fresh query frames per hypothesis; the
    energy detector's rates on those same frames go to a second CSV.
    """
    noise = NoisePower.from_dbm(config.noise_dbm)
    pf_target = TargetFalseAlarm(config.pf_target)
    threshold = np_threshold(pf_target, config.n_samples, noise)
    snrs = [SnrSpec.from_db(db) for db in config.snr_db_list]
    seeds = [_snr_seeds(config.seed, position) for position in range(len(snrs))]

    manifest = RunManifest(
        command='sense_bench',
        config=config.to_dict(),
        parameters={
            'stride': config.stride,
            'precision_digits': config.precision_digits,
            'oracle_equality_mode': config.oracle_equality_mode,
            'threshold_mw': threshold.eta_mw,
            'example_snr': 'test snr',
            'queries_per_hypothesis': config.test_prompts_per_snr,
            'unparseable_decision': Decision.ABSENT.value,
        },
        seeds={'seed': config.seed, 'per_snr': [{'snr_db': snr.db, **s} for snr, s in zip(snrs, seeds)]},
    )

    rows, query_rows = [], []
    for snr, snr_seeds in zip(snrs, seeds):
        rates = monte_carlo_rates(noise, snr, config.n_samples, pf_target, config.energy_trials,
                                  snr_seeds['energy'])
        rows.append(RateRow.from_rates(snr, config.n_samples, pf_target, 'energy', rates))

    service = ChatCompletionService(_sensing_backend(config, threshold.eta_mw), recorder=recorder)
    unparseable, errors = [], []
    for snr, snr_seeds in zip(snrs, seeds):
        examples = few_shot_examples(config, noise, snr, snr_seeds['examples'])
        frames, truths = [], []
        for truth in (Hypothesis.H0, Hypothesis.H1):
            label = 1 if truth is Hypothesis.H1 else 0
            query_seeds = derive_seeds(snr_seeds['queries'], label, config.test_prompts_per_snr)
            frames.extend(_labeled_frames(truth, noise, snr, config.n_samples, query_seeds))
            truths.extend([truth] * config.test_prompts_per_snr)

        query_decisions = [detect(empirical_energy(frame), threshold) for frame in frames]
        query_rows.append(RateRow.from_rates(snr, config.n_samples, pf_target, 'energy',
                                             _rates_from_decisions(query_decisions, truths)))

        prompts = [
            render_sensing_prompt(examples, downsample(frame, config.stride, config.precision_digits),
                                  PromptStyle.FEW_SHOT, config.precision_digits, config.template_path)
            for frame in frames
        ]
        responses = service.complete_many(prompts, return_exceptions=True)
        failure = next((r for r in responses if isinstance(r, BackendError)), None)
        if failure is not None:
            logger.error("Prompted detector aborted at SNR %.2f dB: %s", snr.db, failure.message)
            errors.append({'snr_db': snr.db, 'code': failure.code, 'message': failure.message})
            continue

        decisions = []
        bad = 0
        for response in responses:
            parsed = parse_decision(response)
            if not parsed.decided:
                bad += 1
            decisions.append(Decision.PRESENT if parsed.hypothesis is Hypothesis.H1 else Decision.ABSENT)
        unparseable.append({'snr_db': snr.db, 'count': bad})
        llm = _rates_from_decisions(decisions, truths)
        rows.append(RateRow.from_rates(snr, config.n_samples, pf_target, 'llm', llm))
        logger.info("SNR %.2f dB: prompted Pd=%.4f Pf=%.4f (%d unparseable)", snr.db, llm.pd, llm.pf, bad)

    manifest.summary = {'unparseable': unparseable, 'errors': errors}
    manifest.record_output(out_dir, SENSE_RESULTS, rate_csv(rows))
    manifest.record_output(out_dir, SENSE_QUERY_ENERGY, rate_csv(query_rows))
    return manifest


def roc_sweep(config: RocConfig, out_dir) -> RunManifest:
    """One energy-detector row per target false alarm, all from one simulation"""
    noise = NoisePower.from_dbm(config.noise_dbm)
    snr = SnrSpec.from_db(config.snr_db)
    targets = [TargetFalseAlarm(pf) for pf in config.pf_grid]
    h0 = simulate_statistics(Hypothesis.H0, noise, None, config.n, config.trials, config.seed)
    h1 = simulate_statistics(Hypothesis.H1, noise, snr, config.n, config.trials, config.seed)
    rows = [
        RateRow.from_rates(snr, config.n, target, 'energy',
                           rates_from_statistics(h0, h1, np_threshold(target, config.n, noise)))
        for target in targets
    ]
    manifest = RunManifest(command='roc', config=config.to_dict(), seeds={'seed': config.seed})
    manifest.record_output(out_dir, ROC_RESULTS, rate_csv(rows))
    return manifest


def ask_for_allocation(backend: BackendConfig, cnrs: SubcarrierCnrs, budget: PowerBudget, style,
                       template_path=None, recorder: Optional[TranscriptWriter] = None) -> List[float]:
    """Prompt a backend for an allocation and extract its ALLOCATION line"""
    prompt = render_power_prompt(cnrs, budget, style, template_path)
    response = ChatCompletionService(backend, recorder=recorder).complete(prompt)
    return parse_allocation(response, len(cnrs))


def solve_or_validate(config: WaterfillConfig, recorder: Optional[TranscriptWriter] = None) -> dict:
    """The Allocation, or the Verdict on a proposed (or backend-produced) allocation"""
    cnrs, budget = SubcarrierCnrs(config.cnrs), PowerBudget(config.budget_mw)
    if config.proposed_mw is None and config.backend is None:
        return waterfill(cnrs, budget).as_dict()
    proposed = config.proposed_mw
    if proposed is None:
        proposed = ask_for_allocation(config.backend, cnrs, budget, config.style, config.template_path, recorder)
    verdict = validate_external_solution(proposed, cnrs, budget, config.tol)
    return {'proposed_mw': list(proposed), **verdict.as_dict()}


def waterfill_run(config: WaterfillConfig, out_dir, recorder: Optional[TranscriptWriter] = None) -> RunManifest:
    result = solve_or_validate(config, recorder)
    manifest = RunManifest(command='waterfill', config=config.to_dict(),
                           summary={'verdict': result.get('verdict')})
    name = 'verdict.json' if 'verdict' in result else 'solution.json'
    manifest.record_output(out_dir, name, serialization.dumps(result) + '\n')
    return manifest


def rag_ingest(config: RagIngestConfig, out_dir) -> RunManifest:
    docs = load_documents(config.docs_path)
    index = ingest(docs, config.chunk_tokens, config.overlap_tokens, config.k1, config.b)
    manifest = RunManifest(
        command='rag_ingest',
        config=config.to_dict(),
        parameters={'chunk_tokens': config.chunk_tokens, 'overlap_tokens': config.overlap_tokens,
                    'bm25_k1': config.k1, 'bm25_b': config.b},
        summary={'documents': len(docs), 'chunks': len(index.chunks)},
    )
    manifest.record_output(out_dir, config.index_name, index.to_json())
    return manifest


def format_hits(hits) -> str:
    lines = []
    for rank, (chunk, score) in enumerate(hits, start=1):
        excerpt = ' '.join(chunk.text.split())[:EXCERPT_CHARS]
        lines.append(f"{rank}. {score:.4f}  {chunk.doc_id} [{chunk.span[0]}-{chunk.span[1]}] {chunk.source}")
        lines.append(f"   {excerpt}")
    return '\n'.join(lines) + '\n' if lines else ''


def rag_query(config: RagQueryConfig, out_dir) -> RunManifest:
    """Top-k chunks for one question, as ranked lines"""
    index = ChunkIndex.load(config.index_path)
    hits = retrieve(index, config.question, config.k)
    manifest = RunManifest(
        command='rag_query',
        config=config.to_dict(),
        parameters={'bm25_k1': index.params.k1, 'bm25_b': index.params.b},
        summary={'inputs': {'index': serialization.file_digest(config.index_path)}, 'hits': len(hits)},
    )
    manifest.record_output(out_dir, RAG_HITS, format_hits(hits))
    return manifest


def build_eval_prompts(index: Optional[ChunkIndex], questions: Sequence[McQuestion], k: int,
                       no_rag: bool = False, template_path=None) -> List[RenderedPrompt]:
    """retrieve then augment for every question; no contexts at all with `no_rag`"""
    prompts = []
    for question in questions:
        contexts = [] if no_rag else [chunk for chunk, _ in retrieve(index, question.question, k)]
        prompts.append(augment(question, contexts, template_path))
    return prompts


def rag_eval(config: RagEvalConfig, out_dir, recorder: Optional[TranscriptWriter] = None) -> RunManifest:
    questions = load_questions(config.questions_path)
    index = None if config.no_rag else ChunkIndex.load(config.index_path)
    prompts = build_eval_prompts(index, questions, config.k, config.no_rag, config.template_path)
    responses = ChatCompletionService(config.backend, recorder=recorder).complete_many(prompts)
    predictions = [parse_choice(response, len(question.options))
                   for response, question in zip(responses, questions)]
    report = grade(predictions, questions)
    logger.info("Graded %d questions: %s%% overall, %d unparseable", report.total, report.overall_pct,
                report.unparseable)

    inputs = {'questions': serialization.file_digest(config.questions_path)}
    parameters = {'k': config.k, 'no_rag': config.no_rag}
    if index is not None:
        inputs['index'] = serialization.file_digest(config.index_path)
        parameters.update({'bm25_k1': index.params.k1, 'bm25_b': index.params.b,
                           'chunk_tokens': index.params.chunk_tokens,
                           'overlap_tokens': index.params.overlap_tokens})
    manifest = RunManifest(command='rag_eval', config=config.to_dict(), parameters=parameters,
                           summary={'inputs': inputs, 'overall_pct': report.overall_pct})
    manifest.record_output(out_dir, RAG_REPORT, serialization.dumps(report.to_dict()) + '\n')
    manifest.record_output(out_dir, RAG_TABLE, report.as_table())
    return manifest


def _verdict_label(response, k: int, cnrs: SubcarrierCnrs, budget: PowerBudget, tol: float) -> str:
    if isinstance(response, BackendError):
        return 'error'
    try:
        powers = parse_allocation(response, k)
    except AllocationParseError:
        return 'unparseable'
    return validate_external_solution(powers, cnrs, budget, tol).kind.value


def power_bench(config: PowerBenchConfig, out_dir, recorder: Optional[TranscriptWriter] = None) -> RunManifest:
    """Verdict tallies per prompt style over seeded random water-filling instances"""
    rng = np.random.default_rng(config.seed)
    problems = [random_instance(rng, config.k_max) for _ in range(config.instances)]
    service = ChatCompletionService(config.backend, recorder=recorder)

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(POWER_CSV_HEADER)
    verdicts = []
    for style in config.styles:
        prompts = [render_power_prompt(cnrs, budget, style, config.template_path) for cnrs, budget in problems]
        responses = service.complete_many(prompts, return_exceptions=True)
        labels = [_verdict_label(response, len(cnrs), cnrs, budget, config.tol)
                  for response, (cnrs, budget) in zip(responses, problems)]
        counts = {label: labels.count(label) for label in
                  [kind.value for kind in VerdictKind] + ['unparseable', 'error']}
        optimal_pct = f"{100.0 * counts[VerdictKind.OPTIMAL.value] / len(labels):.2f}"
        writer.writerow([style, len(labels), counts['optimal'], counts['suboptimal'], counts['infeasible'],
                         counts['unparseable'], counts['error'], optimal_pct])
        verdicts.append({'style': style, 'verdicts': labels})
        logger.info("Style %s: %s%% optimal over %d instances", style, optimal_pct, len(labels))

    manifest = RunManifest(command='power_bench', config=config.to_dict(), seeds={'seed': config.seed})
    manifest.record_output(out_dir, POWER_RESULTS, buffer.getvalue())
    manifest.record_output(out_dir, POWER_VERDICTS, serialization.dumps(verdicts) + '\n')
    return manifest


RUNNERS = {
    'sense_bench': sense_bench,
    'roc': roc_sweep,
    'waterfill': waterfill_run,
    'rag_ingest': rag_ingest,
    'rag_query': rag_query,
    'rag_eval': rag_eval,
    'power_bench': power_bench,
}


def run_experiment(command: str, config, out_dir, recorder: Optional[TranscriptWriter] = None,
                   manifest_name: str = MANIFEST_NAME) -> RunManifest:
    """Run `command` and write its manifest next to its outputs"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = RUNNERS[command]
    if command in ('roc', 'rag_ingest', 'rag_query'):
        manifest = runner(config, out_dir)
    else:
        manifest = runner(config, out_dir, recorder=recorder)
    manifest.write(out_dir / manifest_name)
    logger.info("%s wrote %s", command, ', '.join(sorted(manifest.outputs)))
    return manifest


def rerun(manifest_path, out_dir, transcript_path: Optional[str] = None) -> RunManifest:
    """Repeat a recorded run offline and require byte-identical outputs.

    With `transcript_path` the recorded backend is swapped for a replay of that transcript.
    """
    recorded = RunManifest.load(manifest_path)
    data = dict(recorded.config)
    if transcript_path is not None:
        if data.get('backend') is None:
            raise ConfigError(f"A {recorded.command} run has no backend to replay")
        data['backend'] = {**data['backend'], 'kind': BackendKind.REPLAY.value, 'transcript_path': transcript_path}
    config = experiment_config(recorded.command, data)
    backend = getattr(config, 'backend', None)
    if backend is not None and not backend.kind.offline:
        raise ConfigError("Reruns need an offline backend; pass a replay transcript")

    manifest = run_experiment(recorded.command, config, out_dir)
    mismatched = sorted(
        name for name in set(recorded.outputs) | set(manifest.outputs)
        if recorded.outputs.get(name) != manifest.outputs.get(name)
    )
    if mismatched:
        raise ValidationFailure(f"Rerun outputs differ from the manifest: {', '.join(mismatched)}",
                                {'files': mismatched})
    logger.info("Rerun of %s reproduced %d outputs", recorded.command, len(manifest.outputs))
    return manifest
