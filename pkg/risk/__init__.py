# Residual-risk model
