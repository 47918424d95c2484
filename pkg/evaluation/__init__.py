# Lane keeping, comfort and maneuver categories
