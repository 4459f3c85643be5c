# Open-vocabulary occupancy from language-embedded Gaussian maps
