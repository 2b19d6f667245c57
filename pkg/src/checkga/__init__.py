"""Compliance scanning for Google Analytics IP anonymization.

Subsystems: GA hit parsing (:mod:`checkga.hits`), tracker-object detection
(:mod:`checkga.trackers`), embed-snippet linting (:mod:`checkga.lint`),
page capture (:mod:`checkga.session`), site verdicts (:mod:`checkga.verdict`),
longitudinal scan timelines (:mod:`checkga.timeline`), notification-campaign
management (:mod:`checkga.campaign`), weighted survival analysis
(:mod:`checkga.survival`), and the self-service scan service
(:mod:`checkga.service` / :mod:`checkga.usage`).
"""

__version__ = "0.1.0"
