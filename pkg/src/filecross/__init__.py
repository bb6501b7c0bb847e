"""Automated file:// attack testing for Android browser apps against a simulated device."""

__version__ = "0.1.0"
