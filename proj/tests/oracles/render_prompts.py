#!/usr/bin/env python3
"""Renders the reference prompt builders verbatim as Python f-strings.

Writes tests/fixtures/golden_prompts.json: one entry per (choices, n_s) case
with the expected prompt, two-step rail body and direct rail body.
"""
import json
import pathlib


def construct_prompt(choices: list[str], choice_count: int):
    prompt = f"""Please select {choice_count} of the following:"""
    for i, choice in enumerate(choices):
        prompt += f"\n- {choice}"

    return prompt


def two_step_rail(initial_response):
    return f"""<rail version="0.1">

<output>
<list 
    name="choices"
>
</list>
</output>

<instructions>
You are a helpful assistant only capable of communicating with valid JSON, 
and no other text.

${{gr.json_suffix_prompt_examples}}
</instructions>

<prompt>
+++
{initial_response}
+++

${{gr.xml_prefix_prompt}}

${{output_schema}}

Your returned value should be a dictionary with a single "choices" key, 
whose value contains a list of values chosen in the above response enclosed in +++.

</prompt>


</rail>"""


def direct_rail(prompt, choices, choice_count):
    return f"""<rail version="0.1">

<output>
<list 
    name="choices"
    format="length: {choice_count} {choice_count}"
    on-fail-format="noop"
>
<choice>
{"".join(f'''<case name="{choice}">
</case>''' for choice in choices)}
</choice>
</list>
</output>

<instructions>
You are a helpful assistant only capable of communicating with valid JSON, 
and no other text.

${{gr.json_suffix_prompt_examples}}
</instructions>

<prompt>
{prompt}

${{gr.xml_prefix_prompt}}

${{output_schema}}

</prompt>

</rail>"""


CASES = [
    (["A", "B", "C", "D", "E"], 3, "A, B, C"),
    (["Q", "B", "Z"], 3, "I would pick Q, B and Z."),
    (["12", "3", "26", "1", "9", "14", "7", "20", "5", "2"], 3, "12\n3\n26"),
    (["K", "L", "M", "N"], 4, '{"choices": ["K", "L", "M", "N"]}'),
    ([chr(ord("A") + i) for i in range(26)], 3, "Z, Y, X"),
    ([str(i) for i in range(26, 0, -1)], 5, "1 2 3 4 5"),
    (["J", "E", "W", "R", "O", "T", "H"], 3, "Sure! Here are three: J, W, H"),
]


def main():
    out = []
    for choices, count, response in CASES:
        prompt = construct_prompt(choices, count)
        out.append({
            "choices": choices,
            "select": count,
            "response": response,
            "prompt": prompt,
            "two_step_rail": two_step_rail(response),
            "direct_rail": direct_rail(prompt, choices, count),
        })
    path = pathlib.Path(__file__).resolve().parent.parent / "fixtures" / "golden_prompts.json"
    path.write_text(json.dumps(out, indent=1) + "\n")


if __name__ == "__main__":
    main()
