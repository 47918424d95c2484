# Lateral tracking with a single-track model
