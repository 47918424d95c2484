# Closed-loop runs, artifacts and batch commands
