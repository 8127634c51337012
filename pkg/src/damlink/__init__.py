"""Link-level simulation of delay alignment modulation (DAM) for sparse
multipath MISO channels: single-carrier perfect alignment, generic
delay-spread reduction, DAM-OFDM with joint frequency/time beamforming, and a
Monte Carlo evaluation harness with a CLI front end.
"""

from .channel import (
    ChannelGenConfig,
    MultipathChannel,
    MultipathPath,
    SubPath,
    array_response,
    discretize_delay,
    generate_channel,
    load_channel,
    path_correlation,
    save_channel,
)
from .dam_generic import (
    DelayPlan,
    InfeasiblePlanError,
    TimeDomainBeamformers,
    UncoveredPathError,
    achieved_span,
    effective_taps,
    make_delay_plan,
    zf_time_matrices,
)
from .dam_ofdm import (
    FrequencyBeamformers,
    OfdmConfig,
    effective_se,
    ofdm_demodulate,
    ofdm_modulate,
    simulate_ofdm_link,
    solve_joint_beamforming,
    water_fill,
)
from .dam_sc import (
    PathBeamformers,
    ScLinkReport,
    ZfInfeasibleError,
    mrt_beamformers,
    sc_snr,
    simulate_sc_link,
    zf_beamformers,
)
from .evaluation import (
    ExperimentConfig,
    LinkReport,
    ber_dam_ofdm,
    ber_ofdm,
    papr_ccdf,
    qam_ber_awgn,
    run_experiment,
)
from .numerics import RankDeficientError, orth_complement, reduced_svd, unitary_dft

__version__ = "0.1.0"
