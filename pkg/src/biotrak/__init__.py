"""BioTrak: proof-of-authority ledger for food supply-chain traceability."""

__version__ = "0.1.0"
