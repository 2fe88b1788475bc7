"""Weekly respiratory hospital-discharge forecasting from climate-extreme
indices, aerosol optical depth and lagged discharges."""

__version__ = "0.1.0"
