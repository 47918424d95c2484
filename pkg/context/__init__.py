# Situation contexts, speed profiles and behavior options
