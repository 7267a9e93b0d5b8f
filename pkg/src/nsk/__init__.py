"""EEG microstate features, time-frequency images, fMRI difference maps and
from-scratch classifiers with subject-level evaluation."""

__version__ = "0.1.0"
