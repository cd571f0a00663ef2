"""Single source for the package version string."""

VERSION = "0.1.0"
