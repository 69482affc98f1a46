"""Toxic-to-safe prompt rewriting on a toy text-to-image world."""

from ._core import (
    PromptForgeError,
    alignment_score,
    compare,
    confidence_score,
    expected_objective,
    inappropriate_probability,
    load_report,
    normalize,
    oracle_best_rewrite,
    parse_pairs,
    policy_penalty,
    render_instruction,
    rewrite,
    run,
    set_threads,
    synth_pairs,
    tokenize,
    toxic_score,
    world_v1_json,
)

__all__ = [
    "PromptForgeError",
    "alignment_score",
    "compare",
    "confidence_score",
    "expected_objective",
    "inappropriate_probability",
    "load_report",
    "normalize",
    "oracle_best_rewrite",
    "parse_pairs",
    "policy_penalty",
    "render_instruction",
    "rewrite",
    "run",
    "set_threads",
    "synth_pairs",
    "tokenize",
    "toxic_score",
    "world_v1_json",
    "main",
]


def main(argv=None):
    """Console entry point mirroring the native CLI."""
    import sys

    code, out, err = run(list(sys.argv[1:] if argv is None else argv))
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
