"""Low-synchronization Gram-Schmidt kernels for Krylov solvers.

One-column-at-a-time QR schemes (classical, modified, reorthogonalized,
and one-reduction delayed variants) with exact synchronization accounting,
embedded into Arnoldi expansions, a Krylov-Schur eigensolver, and GMRES.
"""

__version__ = "0.1.0"

from .arnoldi import arnoldi, arnoldi_expand, resume_arnoldi
from .eig import (
    EigResult,
    KrylovSchurConfig,
    eig_diagnostics,
    krylov_schur_run,
    match_eigenvalues,
    ritz_residual,
)
from .errors import (
    BreakdownError,
    DimensionError,
    IterationLimitError,
    MatrixMarketError,
    UnknownSchemeError,
)
from .gmres import GmresConfig, GmresResult, backward_error, gmres_solve
from .ledger import (
    CostPrediction,
    SyncLedger,
    assert_matches,
    per_iteration_synchs,
    predicted_counts,
)
from .metrics import (
    StabilityReport,
    forward_error_count,
    loss_of_orthogonality,
    representation_error_arnoldi,
    representation_error_qr,
)
from .ortho import DELAYED_SCHEMES, SCHEME_IDS, make_state, qr_factorize
from .problems import (
    CsrMatrix,
    CsrOperator,
    DenseOperator,
    EigenvalueTable,
    LinearOperator,
    ManteuffelSpec,
    laplace3d,
    manteuffel_build,
    manteuffel_eigenvalues,
    manteuffel_parts,
    parse_matrix_market,
    synthetic_kappa,
    write_matrix_market,
)
from .schur import SchurForm, hessenberg_real_schur, hessenberg_reduce
