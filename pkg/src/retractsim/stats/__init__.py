from .distributions import (
    betainc,
    chi2_sf,
    f_sf,
    gammainc_lower,
    gammainc_upper,
    normal_cdf,
    normal_sf,
    t_sf,
    t_sf_two_sided,
)
from .inference import (
    DegenerateGroup,
    OutOfRangeP,
    PairwiseRow,
    PairwiseTable,
    StatsError,
    TestResult,
    dunn_posthoc,
    holm_adjust,
    kruskal_wallis,
    rankdata,
    welch_anova,
    welch_t,
    welch_t_pairwise,
)
from .regression import InsufficientObservations, RankDeficient, RegressionFit, ols

__all__ = [
    "betainc",
    "chi2_sf",
    "f_sf",
    "gammainc_lower",
    "gammainc_upper",
    "normal_cdf",
    "normal_sf",
    "t_sf",
    "t_sf_two_sided",
    "DegenerateGroup",
    "OutOfRangeP",
    "PairwiseRow",
    "PairwiseTable",
    "StatsError",
    "TestResult",
    "dunn_posthoc",
    "holm_adjust",
    "kruskal_wallis",
    "rankdata",
    "welch_anova",
    "welch_t",
    "welch_t_pairwise",
    "InsufficientObservations",
    "RankDeficient",
    "RegressionFit",
    "ols",
]
