"""picontrol: a personal cloud control centre.

Overview and control of software, data and resource objects across trust
zones: federated directory search, trust-ordered replication and
migration, threshold-secret-shared backup dispersal, and offline-capable
versioned state. Operated through the pictl CLI, an HTTP API and the web
console it serves.
"""

__version__ = "0.1.0"
