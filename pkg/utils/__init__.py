# Library modules for the ENS spectral laboratory
