from django.test import SimpleTestCase
from hypothesis import given, strategies as st

from apps.common.exceptions import (
    AllocationParseError, AllocationArityError, ConfigError, InvalidParameterError, MissingMarkerError,
    NonNumericTokenError,
)
from apps.common.testing import NoNetworkMixin, TempDirMixin
from apps.signal.services import Hypothesis, NoisePower, SensingFrame, generate_frame
from apps.waterfill.services import SubcarrierCnrs, PowerBudget
from .services import (
    PromptStyle, LabeledExample, DecisionKind, downsample, render_sensing_prompt, render_power_prompt,
    parse_decision, parse_allocation, extract_query_observation, extract_power_problem, format_value,
)

NOISE = NoisePower.from_dbm(-100)


def labeled_examples(count):
    return [
        LabeledExample(observation=(1e-10 * (1 + i), 2e-10), label=Hypothesis.H0 if i % 2 == 0 else Hypothesis.H1)
        for i in range(count)
    ]


class DownsampleTests(NoNetworkMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.frame = generate_frame(Hypothesis.H0, NOISE, None, 50, seed=4)

    def test_identity_stride(self):
        self.assertEqual(len(downsample(self.frame, 1, 4)), 50)

    def test_stride_five(self):
        self.assertEqual(len(downsample(self.frame, 5, 4)), 10)
        self.assertEqual(len(downsample(self.frame, 7, 4)), 8)

    def test_magnitude_squared(self):
        frame = SensingFrame(samples=[1 + 0j, 2j, 3 + 0j], truth=Hypothesis.H0, noise=NOISE, snr=None, seed=0)
        self.assertEqual(downsample(frame, 2, 4), [1.0, 9.0])

    def test_significant_digits(self):
        frame = SensingFrame(samples=[complex(1.23456, 0)], truth=Hypothesis.H0, noise=NOISE, snr=None, seed=0)
        self.assertEqual(downsample(frame, 1, 3), [1.52])

    def test_full_precision_is_exact(self):
        self.assertEqual(downsample(self.frame, 1, 17), list(self.frame.energies()))

    def test_invalid_parameters(self):
        with self.assertRaises(InvalidParameterError):
            downsample(self.frame, 0, 4)
        with self.assertRaises(InvalidParameterError):
            downsample(self.frame, 1, 0)
        with self.assertRaises(InvalidParameterError):
            downsample(self.frame, 1, 18)


class SensingPromptTests(NoNetworkMixin, TempDirMixin, SimpleTestCase):

    def test_zero_shot_has_no_examples(self):
        prompt = render_sensing_prompt([], [1e-10, 2e-10], PromptStyle.ZERO_SHOT)
        self.assertNotIn('Example', prompt.user_text)
        self.assertTrue(prompt.user_text.endswith('Query:\nInput: [1.000e-10, 2.000e-10]\nOutput:'))

    def test_examples_in_input_order(self):
        examples = labeled_examples(20)
        prompt = render_sensing_prompt(examples, [1e-10], PromptStyle.FEW_SHOT)
        self.assertEqual(prompt.user_text.count('Example '), 20)
        positions = [prompt.user_text.index(f'Example {i}:\n') for i in range(1, 21)]
        self.assertEqual(positions, sorted(positions))
        self.assertIn('Example 2:\nInput: [2.000e-10, 2.000e-10]\nOutput: H1\n', prompt.user_text)

    def test_deterministic(self):
        first = render_sensing_prompt(labeled_examples(4), [3e-10], PromptStyle.FEW_SHOT)
        second = render_sensing_prompt(labeled_examples(4), [3e-10], PromptStyle.FEW_SHOT)
        self.assertEqual(first, second)
        self.assertRegex(first.fingerprint, r'^[0-9a-f]{64}$')

    def test_style_changes_fingerprint(self):
        plain = render_sensing_prompt(labeled_examples(2), [3e-10], PromptStyle.FEW_SHOT)
        reasoning = render_sensing_prompt(labeled_examples(2), [3e-10], PromptStyle.CHAIN_OF_THOUGHT)
        self.assertNotEqual(plain.fingerprint, reasoning.fingerprint)
        self.assertIn('step by step', reasoning.user_text)
        self.assertLess(reasoning.user_text.index('step by step'), reasoning.user_text.index('Query:'))

    def test_length_grows_with_examples(self):
        lengths = [
            len(render_sensing_prompt(labeled_examples(count), [1e-10], PromptStyle.CHAIN_OF_THOUGHT).user_text)
            for count in range(0, 8)
        ]
        self.assertTrue(all(b > a for a, b in zip(lengths, lengths[1:])))

    def test_style_example_mismatch(self):
        with self.assertRaises(InvalidParameterError):
            render_sensing_prompt(labeled_examples(1), [1e-10], PromptStyle.ZERO_SHOT)
        with self.assertRaises(InvalidParameterError):
            render_sensing_prompt([], [1e-10], PromptStyle.FEW_SHOT)

    def test_query_round_trip_at_full_precision(self):
        values = list(generate_frame(Hypothesis.H0, NOISE, None, 10, seed=1).energies())
        prompt = render_sensing_prompt([], values, PromptStyle.ZERO_SHOT, precision_digits=17)
        self.assertEqual(extract_query_observation(prompt.user_text), values)

    def test_template_override(self):
        path = self.tmp / 'custom.txt'
        path.write_text('TASK {{ task }}\n---\n{{ examples }}{{ query }}\n', encoding='utf-8')
        prompt = render_sensing_prompt([], [1e-10], PromptStyle.ZERO_SHOT, template_path=path)
        self.assertTrue(prompt.user_text.startswith('TASK Decide'))
        self.assertIn('---\nQuery:', prompt.user_text)

    def test_missing_template(self):
        with self.assertRaises(ConfigError):
            render_sensing_prompt([], [1e-10], PromptStyle.ZERO_SHOT, template_path=self.tmp / 'nope.txt')

    def test_invalid_example(self):
        with self.assertRaises(InvalidParameterError):
            LabeledExample(observation=(), label=Hypothesis.H0)
        with self.assertRaises(InvalidParameterError):
            LabeledExample(observation=(-1.0,), label=Hypothesis.H0)

    @given(st.lists(st.floats(min_value=0.0, max_value=1e-6), min_size=1, max_size=5),
           st.sampled_from(list(Hypothesis)))
    def test_rendered_label_parses_back(self, observation, label):
        example = LabeledExample(observation=tuple(observation), label=label)
        prompt = render_sensing_prompt([example], [1e-10], PromptStyle.FEW_SHOT)
        output_line = next(line for line in prompt.user_text.splitlines() if line.startswith('Output: '))
        self.assertIs(parse_decision(output_line).hypothesis, label)


class PowerPromptTests(NoNetworkMixin, SimpleTestCase):

    def setUp(self):
        super().setUp()
        self.cnrs = SubcarrierCnrs((2.0, 1.0))
        self.budget = PowerBudget(1.0)

    def test_lists_instance(self):
        prompt = render_power_prompt(self.cnrs, self.budget, PromptStyle.ZERO_SHOT)
        self.assertIn('[2.0, 1.0]', prompt.user_text)
        self.assertIn('Total power budget (mW): 1.0', prompt.user_text)

    def test_program_style_marker(self):
        prompt = render_power_prompt(self.cnrs, self.budget, PromptStyle.CHAIN_OF_THOUGHT_PROGRAM)
        self.assertIn('ALLOCATION:', prompt.user_text)
        self.assertIn('program', prompt.user_text)

    def test_reasoning_style(self):
        prompt = render_power_prompt(self.cnrs, self.budget, PromptStyle.CHAIN_OF_THOUGHT)
        self.assertIn('step by step', prompt.user_text)
        self.assertNotIn('program', prompt.user_text)

    def test_few_shot_worked_example(self):
        prompt = render_power_prompt(SubcarrierCnrs((5.0, 0.1, 1.0)), PowerBudget(2.0), PromptStyle.FEW_SHOT)
        self.assertIn('ALLOCATION: 0.75, 0.25', prompt.user_text)
        cnrs, budget = extract_power_problem(prompt.user_text)
        self.assertEqual(cnrs.values, (5.0, 0.1, 1.0))
        self.assertEqual(budget.total_mw, 2.0)

    def test_deterministic(self):
        first = render_power_prompt(self.cnrs, self.budget, PromptStyle.CHAIN_OF_THOUGHT_PROGRAM)
        second = render_power_prompt(self.cnrs, self.budget, PromptStyle.CHAIN_OF_THOUGHT_PROGRAM)
        self.assertEqual(first.fingerprint, second.fingerprint)

    def test_styles_accept_values(self):
        prompt = render_power_prompt(self.cnrs, self.budget, 'cot-program')
        self.assertIs(prompt.style, PromptStyle.CHAIN_OF_THOUGHT_PROGRAM)


class ParseDecisionTests(NoNetworkMixin, SimpleTestCase):

    def test_answer(self):
        self.assertIs(parse_decision("The answer is H1").hypothesis, Hypothesis.H1)

    def test_last_match_wins(self):
        self.assertIs(parse_decision("Maybe H0... no, on reflection H1").hypothesis, Hypothesis.H1)

    def test_synonyms(self):
        self.assertIs(parse_decision("The primary user is ABSENT.").hypothesis, Hypothesis.H0)
        self.assertIs(parse_decision("signal present").hypothesis, Hypothesis.H1)

    def test_unparseable(self):
        decision = parse_decision("I cannot tell")
        self.assertIs(decision.kind, DecisionKind.UNPARSEABLE)
        self.assertEqual(decision.raw_excerpt, "I cannot tell")

    def test_excerpt_is_truncated(self):
        self.assertEqual(len(parse_decision('x' * 1000).raw_excerpt), 256)

    def test_bytes(self):
        self.assertIs(parse_decision(b'\xff\xfeH0').hypothesis, Hypothesis.H0)

    @given(st.binary(max_size=512))
    def test_total_on_bytes(self, data):
        self.assertIn(parse_decision(data).kind, set(DecisionKind))


class ParseAllocationTests(NoNetworkMixin, SimpleTestCase):

    def test_values(self):
        self.assertEqual(parse_allocation("Working...\nALLOCATION: 0.75, 0.25", 2), [0.75, 0.25])

    def test_last_line_wins(self):
        self.assertEqual(parse_allocation("ALLOCATION: 1, 0\nthen\nALLOCATION: 0.5, 0.5\n", 2), [0.5, 0.5])

    def test_arity(self):
        with self.assertRaises(AllocationArityError):
            parse_allocation("ALLOCATION: 1.0", 2)

    def test_missing_marker(self):
        with self.assertRaises(MissingMarkerError):
            parse_allocation("p = 0.75, 0.25", 2)

    def test_non_numeric(self):
        with self.assertRaises(NonNumericTokenError):
            parse_allocation("ALLOCATION: 0.75, lots", 2)
        with self.assertRaises(NonNumericTokenError):
            parse_allocation("ALLOCATION: 0.75, nan", 2)

    @given(st.binary(max_size=512), st.integers(min_value=1, max_value=4))
    def test_total_on_bytes(self, data, k):
        try:
            powers = parse_allocation(data, k)
        except AllocationParseError:
            return
        self.assertEqual(len(powers), k)


class FormatValueTests(NoNetworkMixin, SimpleTestCase):

    def test_scientific(self):
        self.assertEqual(format_value(1.23456e-10, 4), '1.235e-10')
        self.assertEqual(format_value(0.0, 2), '0.0e+00')
