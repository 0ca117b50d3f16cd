from dataclasses import asdict, dataclass, replace

from tdsstab.exceptions import ConfigurationError


@dataclass(frozen=True)
class ToleranceConfig:
    """
    Numerical tolerances shared by the subspace search, the rank certificates and
    the block triangularization.

    Attributes:
        rank_tol (float): Relative singular-value threshold for numerical rank.
        eig_cluster_tol (float): Radius within which eigenvalues are grouped before
            Jordan chains are extracted.
        residual_tol (float): Relative acceptance threshold for the bottom-left block
            of a block-triangular transformation.
    """

    rank_tol: float = 1.0e-8
    eig_cluster_tol: float = 1.0e-6
    residual_tol: float = 1.0e-8

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0.0:
                raise ConfigurationError(
                    "tolerance {} must be strictly positive, got {}".format(name, value)
                )

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return asdict(self)


DEFAULT_TOLERANCES = ToleranceConfig()
