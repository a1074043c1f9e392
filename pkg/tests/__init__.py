# Tests package for the Gaussian blur stack codec
