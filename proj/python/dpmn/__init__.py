"""Dual-prior scene-text super-resolution toolkit.

The heavy lifting lives in the compiled extension; this package re-exports it.
"""

from ._core import (  # noqa: F401
    __version__,
    bicubic_up2,
    binarize,
    degrade_to_lr,
    dpmn_forward,
    evaluate,
    gen_dataset,
    gradcheck_suite,
    make_priors,
    psnr,
    recognize,
    render_graphic_prior,
    render_hr,
    set_threads,
    ssim,
    train_dpmn,
    train_psn,
)
