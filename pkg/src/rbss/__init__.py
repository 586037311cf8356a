"""Relay-based synchronization of state-based CRDT replicas."""
