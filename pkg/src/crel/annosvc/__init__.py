"""Agreement-gated annotation service: three-stage workflow, candidate
pooling, append-only event log, and the HTTP JSON API."""
