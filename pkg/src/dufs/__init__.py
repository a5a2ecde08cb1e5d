"""Random-walk crawling of directed graphs and node-label distribution estimation."""

__version__ = "0.1.0"
