"""Prompt templates for the LLM decomposer, the VLM judge, and the
refinement loop, plus their expected response schemas."""

from __future__ import annotations

DECOMPOSE_TAGS = frozenset(
    {"reasoning", "source", "target", "intended_meaning", "visual_prompt"}
)

ANALYSIS_TAGS = frozenset(
    {"s_prime", "t_prime", "m_prime",
     "s_presence_score", "t_presence_score", "meaning_alignment_score"}
)

SCORE_TAGS = frozenset({"decomposition_score", "explanation"})

NO_STM_KEYS = ("visual_description", "metaphorical_alignment", "alignment_score")

WITH_STM_KEYS = ("s_prime", "t_prime", "m_prime",
                 "s_presence_score", "t_presence_score",
                 "meaning_alignment_score")


DECOMPOSE_TEMPLATE = """Analyze the following metaphor: "{metaphor}"

Your task is to:
1. Identify the Source (S), Target (T), and Meaning (M) of the metaphor
2. Generate a detailed visual prompt for an image generation model

Instructions:
- S should be the concrete concept used to explain T
- T should be the abstract concept being explained
- M should be the intended connection or interpretation
- The visual prompt must create a scene that visually represents how T is like S, embodying M
- The visual prompt should be rich in visual details, atmosphere, and composition
- The visual prompt MUST be 77 tokens or less

Please format your response using the following tags:
<reasoning>Your analysis of the metaphor</reasoning>
<source>The concrete source concept</source>
<target>The abstract target concept</target>
<intended_meaning>The metaphorical connection</intended_meaning>
<visual_prompt>A detailed visual description for image generation (<77 tokens)</visual_prompt>"""

# One-shot exemplar pair appended to every decomposition request.
DECOMPOSE_EXAMPLE_USER = 'Analyze the following metaphor: "Ideas are diamonds."'
DECOMPOSE_EXAMPLE_ASSISTANT = """<reasoning>The metaphor "Ideas are diamonds" equates ideas with diamonds, suggesting that ideas, like diamonds, are rare, valuable, and formed under pressure. They are initially rough but can be polished to become brilliant and precious.</reasoning>
<source>Diamonds</source>
<target>Ideas</target>
<intended_meaning>Ideas are valuable, rare, and can be refined to brilliance.</intended_meaning>
<visual_prompt>A brilliant, multifaceted diamond glowing on a dark, velvet cushion. Inside the diamond, intricate neural networks and glowing synapses pulse with light, representing the birth of a powerful idea. The background is dark and abstract, focusing all attention on the diamond's inner light. Cinematic, dramatic lighting.</visual_prompt>"""


DECOMPOSITION_SCORE_TEMPLATE = """You are an expert in linguistics and semantics. Evaluate the following decomposition of a metaphor.
Original Metaphor: "{metaphor}"

Decomposition:
- Source (S): "{s}"
- Target (T): "{t}"
- Meaning (M): "{m}"

Critique this decomposition. Does 'S' correctly identify the concrete concept? Does 'T' correctly identify the abstract concept? Does 'M' accurately capture the intended connection?

Provide a single score from 0.0 (completely wrong) to 1.0 (perfectly accurate) representing the quality of this decomposition.
Respond using XML-style tags. Put the score inside <decomposition_score> tags and the explanation inside <explanation> tags.

Example:
<decomposition_score>0.8</decomposition_score>
<explanation>The decomposition is mostly correct, but the meaning could be more precise.</explanation>"""


_ANALYSIS_BODY = """You are an expert art critic. Your task is to analyze an image generated to visualize a metaphor. The original metaphor is: '{metaphor}'.
The intended breakdown was:
- Source (S): '{s}' (the concrete element)
- Target (T): '{t}' (the abstract concept)
- Meaning (M): '{m}' (the intended connection)

Critically analyze the provided image based on this context. Be strict.
1. Perceived Source (S'): What is the primary visual element in the image that represents '{s}'?
2. Perceived Target (T'): What visual elements, if any, symbolize or evoke the abstract concept of '{t}'? If the image ONLY shows '{s}' without any clear visual link to '{t}', state that the target is not represented.
3. Perceived Meaning (M'): What is the overall meaning the image conveys?
4. S Presence Score: How clearly is '{s}' depicted? (0.0 for not present, 1.0 for clearly present).
5. T Presence Score: How effectively does the image use the visuals of S to symbolize or evoke T? A score of 0.1 should be given if the image only shows S without any metaphorical connection to T. A high score requires clear symbolic elements (e.g., color, composition, atmosphere) that represent T. Be critical.
6. Meaning Alignment Score: Based on your analysis, how well does the Perceived Meaning (M') align with the original intended Meaning (M)? Provide a score from 0.0 (no alignment) to 1.0 (perfect alignment).
"""

VLM_ANALYSIS_XML_TEMPLATE = _ANALYSIS_BODY + """
Respond using XML-style tags. Put each answer inside its own tag. Example:
<s_prime>A large, ancient tree.</s_prime>
<t_prime>The concept of 'wisdom' is evoked by the tree's gnarled branches and deep roots.</t_prime>
<m_prime>The image suggests that wisdom is something that grows over a long time and is deeply rooted.</m_prime>
<s_presence_score>0.9</s_presence_score>
<t_presence_score>0.7</t_presence_score>
<meaning_alignment_score>0.8</meaning_alignment_score>"""

VLM_ANALYSIS_JSON_TEMPLATE = _ANALYSIS_BODY + """
Respond with a JSON object with keys 's_prime', 't_prime', 'm_prime', 's_presence_score', 't_presence_score', and 'meaning_alignment_score'."""


VLM_NO_STM_TEMPLATE = """You are an expert art critic. Your task is to analyze an image generated to visualize a metaphor.
The original metaphor is: '{metaphor}'.

Critically analyze how well the provided image visually represents this metaphor.
1. Visual Description: Briefly describe the main elements and style of the image.
2. Metaphorical Alignment: How well does the image capture the essence and meaning of the metaphor?
3. Alignment Score: Provide a single score from 0.0 (no connection) to 1.0 (perfectly represents the metaphor) for how well the image visualizes the metaphor.

Respond with a JSON object with keys 'visual_description', 'metaphorical_alignment', and 'alignment_score'."""


REFINE_TEMPLATE = """Original Metaphor: "{metaphor}"
  - Source (S): {s}
  - Target (T): {t}
  - Meaning (M): {m}

Decomposition Quality Score: {decomposition_quality:.4f}
- This score reflects how well the original S, T, M breakdown captures the metaphor's meaning.
- A low score suggests the decomposition might be inaccurate or incomplete.

Current Image Generation Prompt: "{current_prompt}"

Evaluation Feedback:
Overall Reward: {reward:.4f}
Individual Scores:
{scores_summary}

Perceived by VLM from the last generated image:
  - Perceived Source (S'): {s_prime}
  - Perceived Target (T'): {t_prime}
  - Perceived Meaning (M'): {m_prime}

Task: Based on this feedback, suggest a revised image generation prompt.
The new prompt should aim to:
1. Better represent the original Source (S), Target (T), and Meaning (M) in the image.
2. Address any weaknesses indicated by the scores (e.g., if S' is different from S, or if M' misaligns with M).
3. If the decomposition quality is low, focus on the most reliable aspects of the S, T, M breakdown.

Provide *only* the new, revised image generation prompt as a single string. Do not include any other explanatory text or labels, and the prompt MUST be 77 tokens or less."""

# Corrective instruction appended when a completion fails to parse and
# the same request is re-asked once.
REASK_SUFFIX = ("\n\nYour previous reply could not be parsed. "
                "Respond again following the required format exactly.")
