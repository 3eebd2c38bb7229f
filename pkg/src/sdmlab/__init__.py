"""Simulation of sigma-delta DACs: classical error feedback, its time-interleaved
equivalent, and an analog-multiplexed output stage, with clock jitter and
spectral figures of merit."""

__version__ = "0.1.0"

from .sdm_core import (  # noqa: E402
    FirFilter,
    QuantizerSpec,
    ef_modulate,
    make_loop_filter,
    ntf_of,
    quantize,
)
from .polyphase import (  # noqa: E402
    BlockFilter,
    LowRateBank,
    build_block_filter,
    equivalence_check,
    polyphase_decompose,
    ti_modulate,
    ti_multiplex_digital,
)
from .analog import (  # noqa: E402
    AnalogWaveform,
    ClockTrain,
    JitterSpec,
    analog_mux,
    comb_filter,
    dt_model_check,
    make_clock,
    render_nrz,
)
from .spectral import (  # noqa: E402
    MetricConfig,
    comb_response,
    compute_sndr,
    dac_step,
    dr_sweep,
    estimate_psd,
    measure_sigma_dy,
    min_osr_for_distortion,
    predict_snr_jtt1,
    snr_improvement,
)
