"""Exact and asymptotic analysis of additive functionals on random m-ary search trees.

Subpackages by role:

* enumeration: exact counts tau_n and truncated power-series arithmetic
* singular_constants: dominant singularity, expansion coefficients, toll
  series constants, theorem constants
* moment_engine: exact moments of additive functionals, centering,
  degeneracy analysis
* limit_distributions: moment sequences of the limit laws
* tree_sampler: exact split-law sampling and Monte Carlo summaries
* verification_harness: cross-checks tying the modules together
* cli_reporting: the msearch command line front end
"""

__version__ = "0.1.0"
