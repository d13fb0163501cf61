"""Scene text reading pipeline."""

from ._semstr import (
    CorrectorModel,
    DegenerateQuadError,
    DivergenceError,
    Error,
    InputError,
    MalformedCheckpointError,
    VersionMismatchError,
    analyze,
    arrange,
    beam_decode,
    compute_homography,
    ctc_collapse,
    ctc_log_prob,
    default_alphabet,
    format_percent,
    greedy_decode,
    group,
    noisy_corpus,
    preprocess,
    rectify,
    render_frames,
    run_pipeline,
    synth_document,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
