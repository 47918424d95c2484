# Longitudinal minimum-jerk planning
