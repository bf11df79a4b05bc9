"""Free component analysis: unmixing additive mixtures of matrices."""

from .datagen import EnsembleSpec, mix, sample, synth_waveform
from .embeddings import EmbeddingSpec, embed, stft
from .evaluation import ErrorReport, freeness_heuristic, unmixing_error
from .exceptions import (
    DegenerateSpectrumError,
    DimensionError,
    FreeUnmixError,
    IdentifiabilityWarning,
    NumericalError,
    ParseError,
    RankError,
    SingularCovarianceError,
    UnsupportedCodecError,
)
from .factorization import FactorizationResult, fcf, icf, unmix_via_embedding
from .free_stats import (
    classical_kurtosis,
    free_entropy_rect,
    free_entropy_sa,
    free_kurtosis_rect,
    free_kurtosis_sa,
    negentropy_approx,
)
from .manifold_opt import OptimizerConfig, OptimizerTrace, optimize
from .stack import MatrixStack, ObjectiveKind
from .whitening import WhiteningResult, whiten, whiten_overdetermined, whiten_vectorized

__version__ = "0.1.0"
