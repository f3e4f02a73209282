from .fit_manager import FitManager
from .study_manager import StudyManager, run_study

__all__ = ['FitManager', 'StudyManager', 'run_study']
