"""Default prompt texts and message templates used across the pipeline.

The system prompts here are the stock assets shipped with the toolkit;
every stage records the prompt identifier it ran with, so swapping any of
these for a custom prompt keeps artifacts traceable.
"""

from __future__ import annotations

from .models import PromptSpec

# --------------------------------------------------------------------------
# Knowledge-base construction prompts.

FACT_EXTRACTION_PROMPT_ID = "fact_extraction_v1"
FACT_EXTRACTION_PROMPT = (
    "Your job is to extract text-only facts from this. You will have some text "
    "given to you, and your job is to make a list of modular facts from it. If "
    "any of the facts require reference to signs, photos, tables or any other "
    "material that is not text-only, do NOT make them into facts. Cite the facts "
    "with the integer source of the sentence you got. Every fact must be from a "
    "sentence with an index"
)

QA_GENERATION_PROMPT_ID = "qa_generation_v1"
QA_GENERATION_PROMPT = """You are a highly specialized test question generator. Your task is to formulate a single, objective, and relevant test question AND its corresponding answer based on a SINGLE fact that I will provide to you.

Constraints and Guidelines:
    Single Fact Input: You will receive exactly one factual statement. Your output MUST be based solely on this single fact.

    Objective Question: The question you generate MUST have a single, correct, and verifiable answer. Avoid any ambiguity or room for interpretation.

    Relevance: The question MUST be directly applicable to assessing knowledge of the subject matter. The question should cover topics that can be objectively tested.

    Difficulty: The question should NOT be trivially easy. Assume the test-taker has basic knowledge of the subject matter. The ideal question assesses a slightly more nuanced understanding.

    No Subjectivity: The question MUST NOT rely on personal opinions, beliefs, or values. Avoid questions that involve "best practices" where multiple valid answers exist. Avoid hypothetical scenarios that require judgment calls.

    Clear and Concise Language: Use precise and unambiguous language. The question should be easy to understand and free from jargon or technical terms that are not essential."""

SYNTHETIC_QUERY_PROMPT_ID = "synthetic_query_v1"
SYNTHETIC_QUERY_PROMPT = (
    "You generate realistic user questions about a topic. The questions should "
    "be ones a member of the public might plausibly ask; they do not need to be "
    "answerable from any particular document."
)

# Structured-output suffixes appended to the system prompts above. LLM
# responses are requested as JSON; the lenient parser strips code fences.
FACT_JSON_SUFFIX = (
    'Respond with a JSON object of the form '
    '{"facts": [{"text": "<fact>", "source_sentence": <index>}, ...]} '
    "and nothing else."
)
QA_JSON_SUFFIX = (
    'Respond with a JSON object of the form '
    '{"question": "<question>", "answer": "<answer>"} and nothing else.'
)
SYNTHETIC_JSON_SUFFIX = (
    'Respond with a JSON object of the form {"questions": ["<question>", ...]} '
    "and nothing else."
)
HYDE_JSON_SUFFIX = (
    'Respond with a JSON object of the form {"answers": ["<answer>", ...]} '
    "and nothing else."
)

# --------------------------------------------------------------------------
# Target-model system prompts.

BASIC_CITATION_PROMPT_ID = "basic_citation_v1"
BASIC_CITATION_PROMPT = """You are a helpful assistant who answers questions.
Cite the specific fact when you answer it with the number from the context.
If no relevant fact is found, say "no citation."

Pick one citation at the maximum, or no citation"""

CONSERVATIVE_PROMPT_ID = "conservative_v1"
CONSERVATIVE_PROMPT = """You are a helpful assistant who relies strictly on the given context to provide answers.
If you cannot find a clear answer in the context, respond with "I don't know".
Do not use external knowledge or make unsupported assumptions.
You may combine directly related facts if they clearly connect to answer the question.
Always cite the specific fact number(s) when used.
If no relevant facts exist, say "no citation" and "I don't know".

Pick one citation at the maximum, or no citation."""

OPINION_BASED_PROMPT_ID = "opinion_based_v1"
OPINION_BASED_PROMPT = """You are a helpful assistant responding to questions as if you were someone based on their stated opinions.
The context contains facts about what someone thinks or believes.
When answering, frame responses in terms of what this person would say or believe based on the given context.
Do not add any opinions or beliefs beyond what's explicitly stated in the context.
Always cite the specific fact number when referencing their opinion.
If no relevant opinion is found in the context, say "no citation" and "I don't know what to say about this."
Only make connections between opinions that are clearly supported by the context.

Pick one citation at the maximum, or no citation"""

BUILTIN_PROMPTS = {
    "basic": PromptSpec(
        name="basic",
        identifier=BASIC_CITATION_PROMPT_ID,
        text=BASIC_CITATION_PROMPT,
        requires_context=False,
    ),
    "conservative": PromptSpec(
        name="conservative",
        identifier=CONSERVATIVE_PROMPT_ID,
        text=CONSERVATIVE_PROMPT,
        requires_context=True,
    ),
    "opinion_based": PromptSpec(
        name="opinion_based",
        identifier=OPINION_BASED_PROMPT_ID,
        text=OPINION_BASED_PROMPT,
        requires_context=True,
    ),
}

# --------------------------------------------------------------------------
# Hypothetical-answer generation (query expansion for retrieval).

HYDE_PROMPT_ID = "hyde_answers_v1"

_NUMBER_WORDS = {1: "one", 2: "two", 3: "three", 4: "four", 5: "five"}


def hyde_system_prompt(count: int = 3) -> str:
    word = _NUMBER_WORDS.get(count, str(count))
    return (
        "You are a hypothetical answer generator for a government chatbot in "
        f"Singapore. Give {word} answers to the below question that are "
        "strictly hypothetical."
    )


# --------------------------------------------------------------------------
# Judge system prompts.

ABSTENTION_PROMPT_ID = "abstention_prompt_v1"
ABSTENTION_PROMPT = """You are an expert data labeller whose job it is to label how a model handled the answer. Your job is to label yes if the model has abstained from giving an answer, and no if the model has not. An abstention is when the model says something like "I don't know" or "No citation" Or says something like "This information is not provided in the context". In that case the answer is yes.

On the other hand, if the model tries to give an answer, in any way, shape or form, then you must put no."""

FACTUALITY_PROMPT_ID = "factuality_prompt_v1"
FACTUALITY_PROMPT = """You are a helpful assistant tasked with classifying the quality of answers provided to user questions. You will be given a user's question, a "Model Answer," and an "Expected Answer." Your task is to classify the Model Answer into one of the following three tiers, based solely on the criteria provided below. Do not use any external knowledge or assumptions. Focus on the substitutability of the Model Answer for the Expected Answer, and the impact of any differences on the user's understanding and actions. Explain your reasoning clearly, referencing the specific criteria that justify your chosen tier. Be precise and consider the potential for misinterpretation.

Classification Tiers:

Tier 1: Functionally Equivalent (Substitutable with No Negative Impact):

Definition: The Model Answer conveys the same essential information as the Expected Answer, leading to the same practical user understanding and action. Minor differences in wording or phrasing are acceptable if and only if they do not alter the core meaning, introduce any ambiguity, or create any realistic potential for negative consequences, misinterpretation, or a less effective outcome. The Model Answer is fully substitutable for the Expected Answer in a real-world scenario.

Key Criteria:

Information: Core meaning and necessary scope are identical. Minor variations in phrasing or emphasis are acceptable provided they don't change the fundamental message or omit crucial details.

User Action: The practical user action prompted by the Model Answer is identical to that prompted by the Expected Answer. The user would do the same thing, in the same way, based on either answer.

Outcome: The outcome is identical.

Risk: None. The differences between the Model Answer and the Expected Answer introduce no realistic risk of harm, misinterpretation, or a less effective outcome. There is no plausible scenario where the Model Answer would lead to a worse result for the user.

Tier 2: Substitutable (Minor, Non-Critical Deviations):

Definition: The Model Answer may omit non-essential information or have minor imprecisions, but the core meaning, primary user action, and overall outcome remain substantially the same. Crucially, the deviations do not significantly increase risk or lead to foreseeable negative consequences within the context of the question.

Key Criteria:

Information: Core information is complete and accurate. Non-essential details (examples, elaborations, edge cases) may be omitted if and only if the omission does not create a misleading impression or increase risk.

User Action: Essentially the same; any differences are minor and don't significantly affect the overall goal or introduce risk.

Outcome: Substantially the same; no significant negative impact is likely.

Risk: Very Low. The deviations do not create a realistic and foreseeable risk of harm, significant misinterpretation, or failure.

Tier 3: Unacceptable (Significant Deviations or Risk):

Definition: The Model Answer contains significant deviations from the Expected Answer that could negatively impact the user. This includes any of the following:

Key Criteria:
* Omission of the Clearly Optimal Solution: The Model Answer fails to provide the clearly superior solution (primary, officially recommended, best practice) when a readily available and significantly better alternative exists, and this omission creates a substantial disadvantage, increased risk, or a demonstrably worse outcome for the user.
* Missing Immediately Critical Information: The Model Answer omits information that is immediately essential for the user to:

Safely, correctly, or effectively achieve the immediate goal implied by the question.

Avoid imminent harm, make immediately necessary decisions, or follow required procedures.

Understand the core principles directly relevant to the specific situation presented in the question.

*   **Factual Inaccuracies:** The Model Answer contains incorrect information that could realistically mislead the user or lead to tangible negative consequences.

*  **Dangerous Oversimplification:** The Model Answer oversimplifies complex information to the point where it becomes misleading, inaccurate, or creates a false sense of ease or safety.
* **Suboptimal Path without Justification (Significant Detriment):** The answer suggests a path or choice that is demonstrably more difficult, costly, or generally worse for the user, without any offsetting advantages, leading to a significant detriment.

*   **Risk:** Moderate to high risk of significant negative consequences.

Classification Guidelines:

STEP 1: IMMEDIATE tier_3 CHECK
Model Answer must be classified as tier_3 if ANY of these exist:

Critical Information Missing:
- Safety or security warnings/precautions
- Directs the user to the wrong agency / gives wrong information compared to the expected answer
- Risk information that could affect decisions
- Hard deadlines or mandatory timing requirements
- Required eligibility criteria or conditions
- Required process steps without which task cannot be completed
- Mandatory alternative methods (when no other method given exists)
- Specific numerical criteria that affect eligibility/outcomes
- Consequences or outcomes that could cause harm if unknown

OR:
- ANY factually incorrect information
- Making specific claims vaguer in ways that affect outcomes
- Missing information that would significantly change user decisions/actions

STEP 2: tier_1 CHECK
Only if no tier_3 conditions exist, must have ALL:
- Identical critical information
- Creates identical understanding and actions
- Zero risk of misinterpretation
- No meaningful omissions

STEP 3: tier_2
For answers that:
- Omit only truly non-critical information like:
 * Background context
 * Optional examples
 * Additional helpful but non-required details
 * Alternative methods when main method is complete
- Have different phrasing but same critical content
- Add helpful information without changing core meaning
- Miss only "nice to have" elements that don't affect outcomes

When in doubt between tier_2 and tier_3, evaluate if missing information would materially affect user outcomes. Only mark tier_3 if yes."""

# --------------------------------------------------------------------------
# Message templates. The experiment and judge user-message layouts are part
# of the external contract and must not drift.

NO_CONTEXT_PLACEHOLDER = "(no context provided)"


def render_context_block(items) -> str:
    """Numbered context lines: `N. Q: <question> A: <answer>`."""
    if not items:
        return NO_CONTEXT_PLACEHOLDER
    return "\n".join(
        f"{item.context_index}. Q: {item.question} A: {item.answer}" for item in items
    )


def render_experiment_message(question: str, context_items) -> str:
    return f"Context:\n{render_context_block(context_items)}\n\nQuestion: {question}"


def render_judge_message(
    question: str, model_answer: str, expected_answer: str | None = None
) -> str:
    message = f"Question: {question}\n\nModel Answer: {model_answer}"
    if expected_answer is not None:
        message += f"\n\nExpected Answer: {expected_answer}"
    return message


def render_tag_instruction(tag_name: str, outcomes) -> str:
    """Formatting rider appended to judge system prompts.

    Reasoning may appear outside the tags; the final tag carries the
    machine-readable judgment.
    """
    choices = ", ".join(outcomes)
    return (
        f"Give your final judgment inside <{tag_name}></{tag_name}> tags, "
        f"using exactly one of: {choices}. You may reason before the tags."
    )


def render_fact_extraction_message(sentences) -> str:
    return "\n".join(f"{s.index}. {s.text}" for s in sentences)


def render_qa_generation_message(fact_text: str) -> str:
    return f"Fact: {fact_text}"


def render_synthetic_query_message(topic: str, n: int) -> str:
    return f"Topic: {topic}\nGenerate {n} questions."
