"""Proactive website archiving: discover a site's links, submit them to a
Wayback-style save endpoint under a runtime budget, archive on change, and
watch the schedule that keeps it all running."""

__version__ = "0.1.0"
