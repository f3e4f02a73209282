from .catalog import make_family, make_link
from .skewness import edgeworth_pdf, skewness_report

__all__ = ['make_family', 'make_link', 'edgeworth_pdf', 'skewness_report']
