"""Serialize depth-distribution / normal / boundary model outputs into the
binary formats the pvfusion reconstruction pipeline ingests."""

from .export import ExportJob, export
from .models import Binning, load_model

__version__ = "0.1.0"
