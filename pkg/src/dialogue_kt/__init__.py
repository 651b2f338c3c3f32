"""Knowledge tracing workbench for tutor-student dialogues."""

__version__ = "0.1.0"
