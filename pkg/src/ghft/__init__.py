"""Free classical and quantum fields on lattice globally hyperbolic spacetimes."""
