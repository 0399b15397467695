# graphot
# Permutation-invariant graph losses, transport-plan solvers and graph matching
