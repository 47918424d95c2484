# Junction simulator and perception
