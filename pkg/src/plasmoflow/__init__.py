"""plasmoflow: malaria importation-risk flow analytics from CDR mobility."""

__version__ = "0.1.0"
