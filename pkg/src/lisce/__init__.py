"""Channel estimation for LIS-assisted MISO links: LS, LMMSE, MM-designed
training phases, CNN denoisers and downlink rate evaluation."""

__version__ = "0.1.0"
