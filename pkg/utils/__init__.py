"""Hilfsfunktionen: Container-Dateien, Checkpoints, Konfiguration, Berichte."""

from .array_container import ContainerError, read_container, write_container

__all__ = ['ContainerError', 'read_container', 'write_container']
