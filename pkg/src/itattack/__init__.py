"""Query-budgeted black-box adversarial attacks on image-translation oracles."""

from .attacks import (
    AttackOutcome,
    BanditsConfig,
    NesConfig,
    SimbaConfig,
    it_bandits_attack,
    it_nes_attack,
    it_simba_attack,
    nes_gradient_estimate,
    success_holds,
)
from .candidates import CandidateSource, PixelBasis, SequenceSource
from .errors import CapabilityError, ConfigError, ShapeError, TransportError
from .lup import (
    ExploitConfig,
    LeakReport,
    exploit_phase,
    extract_components,
    leak_phase,
    load_bundle,
    project_total_queries,
    save_bundle,
)
from .oracle import (
    OracleHandle,
    QueryLedger,
    SyntheticOracleSpec,
    analytic_gradient,
    budgeted_query,
    make_synthetic_oracle,
    remote_oracle,
)
from .tensor import (
    AttackObjective,
    ImageTensor,
    RngStream,
    clip_to_range,
    perturbation_norm,
    regression_loss,
    sample_gaussian,
)

__version__ = "0.1.0"
